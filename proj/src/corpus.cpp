#include "remask/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "remask/error.hpp"
#include "remask/rng.hpp"

namespace remask {

using nlohmann::json;

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

bool is_word_byte(unsigned char c) { return c >= 0x80 || std::isalnum(c) != 0; }

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && is_space(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_unique_ids(const std::vector<ArgumentInstance>& instances) {
  std::set<std::string> seen;
  for (const auto& inst : instances) {
    if (!seen.insert(inst.id).second) throw ParseError("duplicate id '" + inst.id + "'");
  }
}

// Minimal RFC 4180 reader: quoted fields may contain commas, doubled quotes
// and newlines. Returns rows paired with the line number each row starts on.
std::vector<std::pair<std::size_t, std::vector<std::string>>> read_csv(std::string_view text) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t row_line = 1;

  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    bool blank = row.size() == 1 && trim(row[0]).empty();
    if (!blank) rows.emplace_back(row_line, std::move(row));
    row.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
      ++line;
      row_line = line;
    } else if (c == '\r') {
      // tolerate CRLF
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw ParseError("line " + std::to_string(row_line) + ": unterminated quoted field");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

}  // namespace

std::string_view to_string(Stance stance) {
  switch (stance) {
    case Stance::support: return "support";
    case Stance::oppose: return "oppose";
    case Stance::neutral: return "neutral";
  }
  return "neutral";
}

Stance parse_stance(std::string_view text) {
  std::string s = trim(text);
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "support" || s == "pro" || s == "1" || s == "+1") return Stance::support;
  if (s == "oppose" || s == "con" || s == "-1") return Stance::oppose;
  if (s == "neutral" || s == "0") return Stance::neutral;
  throw ParseError("unknown stance '" + std::string(text) + "'");
}

void validate(const ArgumentInstance& instance) {
  if (instance.id.empty()) throw InvalidArgument("instance has an empty id");
  if (instance.claims.empty())
    throw InvalidArgument("instance '" + instance.id + "' has no claims");
  for (const auto& c : instance.claims) {
    if (trim(c.claim).empty())
      throw InvalidArgument("instance '" + instance.id + "' has an empty claim");
  }
}

DatasetFormat parse_dataset_format(std::string_view text) {
  if (text == "claims_json" || text == "json" || text == "jsonl") return DatasetFormat::claims_json;
  if (text == "pairs_csv" || text == "csv") return DatasetFormat::pairs_csv;
  throw InvalidArgument("unknown dataset format '" + std::string(text) + "'");
}

json to_json(const ArgumentInstance& instance) {
  json claims = json::array();
  for (const auto& c : instance.claims) {
    claims.push_back({{"claim", c.claim}, {"evidence", c.evidence}});
  }
  json out = {{"id", instance.id},
              {"topic", instance.topic},
              {"stance", std::string(to_string(instance.stance))},
              {"claims", std::move(claims)}};
  if (instance.reference_summary) out["summary"] = *instance.reference_summary;
  return out;
}

ArgumentInstance instance_from_json(const json& record) {
  if (!record.is_object()) throw ParseError("record is not a JSON object");
  ArgumentInstance inst;
  try {
    inst.id = record.at("id").get<std::string>();
    inst.topic = record.value("topic", std::string());
    inst.stance = parse_stance(record.value("stance", std::string("neutral")));
    for (const auto& c : record.at("claims")) {
      ClaimUnit unit;
      unit.claim = c.at("claim").get<std::string>();
      if (c.contains("evidence")) unit.evidence = c.at("evidence").get<std::vector<std::string>>();
      inst.claims.push_back(std::move(unit));
    }
    if (record.contains("summary") && !record.at("summary").is_null())
      inst.reference_summary = record.at("summary").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid record: ") + e.what());
  }
  try {
    validate(inst);
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what());
  }
  return inst;
}

std::vector<ArgumentInstance> parse_claims_json(std::string_view text) {
  std::vector<ArgumentInstance> out;
  if (trim(text).empty()) throw ParseError("empty dataset");

  json whole = json::parse(text.begin(), text.end(), nullptr, false);
  if (!whole.is_discarded()) {
    if (whole.is_array()) {
      for (std::size_t i = 0; i < whole.size(); ++i) {
        try {
          out.push_back(instance_from_json(whole[i]));
        } catch (const ParseError& e) {
          throw ParseError("record " + std::to_string(i + 1) + ": " + e.what());
        }
      }
    } else {
      try {
        out.push_back(instance_from_json(whole));
      } catch (const ParseError& e) {
        throw ParseError(std::string("record 1: ") + e.what());
      }
    }
  } else {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string_view::npos) end = text.size();
      ++line_no;
      std::string line = trim(text.substr(start, end - start));
      if (!line.empty()) {
        json rec = json::parse(line, nullptr, false);
        if (rec.is_discarded())
          throw ParseError("line " + std::to_string(line_no) + ": invalid JSON");
        try {
          out.push_back(instance_from_json(rec));
        } catch (const ParseError& e) {
          throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
      }
      start = end + 1;
    }
  }
  if (out.empty()) throw ParseError("empty dataset");
  check_unique_ids(out);
  return out;
}

std::vector<ArgumentInstance> parse_pairs_csv(std::string_view text) {
  auto rows = read_csv(text);
  if (rows.empty()) throw ParseError("empty dataset");

  const auto& header = rows.front().second;
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;
  for (const char* name : {"topic", "stance", "key_point", "argument"}) {
    if (!col.count(name))
      throw ParseError("line 1: missing column '" + std::string(name) + "'");
  }

  std::vector<ArgumentInstance> out;
  std::map<std::pair<std::string, Stance>, std::size_t> group_index;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& [line, fields] = rows[r];
    auto field = [&](const char* name) -> std::string {
      std::size_t i = col.at(name);
      if (i >= fields.size())
        throw ParseError("line " + std::to_string(line) + ": expected " +
                         std::to_string(header.size()) + " fields, got " +
                         std::to_string(fields.size()));
      return trim(fields[i]);
    };
    std::string topic = field("topic");
    Stance stance;
    try {
      stance = parse_stance(field("stance"));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line) + ": " + e.what());
    }
    std::string key_point = field("key_point");
    std::string argument = field("argument");
    if (key_point.empty())
      throw ParseError("line " + std::to_string(line) + ": empty key_point");

    auto [it, fresh] = group_index.try_emplace({topic, stance}, out.size());
    if (fresh) {
      ArgumentInstance inst;
      inst.id = "kp-" + std::to_string(out.size());
      inst.topic = topic;
      inst.stance = stance;
      out.push_back(std::move(inst));
    }
    auto& claims = out[it->second].claims;
    auto claim = std::find_if(claims.begin(), claims.end(),
                              [&](const ClaimUnit& c) { return c.claim == key_point; });
    if (claim == claims.end()) {
      claims.push_back({key_point, {}});
      claim = std::prev(claims.end());
    }
    if (!argument.empty()) claim->evidence.push_back(argument);
  }
  if (out.empty()) throw ParseError("empty dataset");
  return out;
}

std::vector<ArgumentInstance> load_dataset(const std::filesystem::path& path,
                                           DatasetFormat format) {
  std::string text = read_file(path);
  try {
    return format == DatasetFormat::claims_json ? parse_claims_json(text) : parse_pairs_csv(text);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string to_jsonl(std::span<const ArgumentInstance> instances) {
  std::string out;
  for (const auto& inst : instances) {
    out += to_json(inst).dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, std::span<const ArgumentInstance> instances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_jsonl(instances);
}

TopicSplit split_by_topic_hash(std::span<const ArgumentInstance> instances, double test_fraction,
                               std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction > 1.0)
    throw InvalidArgument("test_fraction must lie in [0, 1]");
  TopicSplit split;
  for (const auto& inst : instances) {
    std::uint64_t h = splitmix64(fnv1a64(inst.topic) ^ seed);
    double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    (u < test_fraction ? split.test : split.train).push_back(inst);
  }
  return split;
}

// ---------------------------------------------------------------------------

bool is_reserved_surface(std::string_view surface) {
  return surface == token::mask_surface || surface == token::pad_surface ||
         surface == token::unk_surface || surface == token::eos_surface;
}

Vocabulary::Vocabulary() {
  push(std::string(token::mask_surface), 0);
  push(std::string(token::pad_surface), 0);
  push(std::string(token::unk_surface), 0);
  push(std::string(token::eos_surface), 0);
}

void Vocabulary::push(std::string surface, std::uint64_t count) {
  index_.emplace(surface, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(std::move(surface));
  counts_.push_back(count);
}

const std::string& Vocabulary::surface(TokenId id) const {
  if (!contains(id)) throw InvalidArgument("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::count(TokenId id) const {
  if (!contains(id)) throw InvalidArgument("token id " + std::to_string(id) + " out of range");
  return counts_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view surface) const {
  auto it = index_.find(std::string(surface));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id_or_unk(std::string_view surface) const {
  auto id = find(surface);
  if (!id || *id < token::first_surface) return token::unk;
  return *id;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\t';
    out += std::to_string(counts_[i]);
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  Vocabulary v;
  v.tokens_.clear();
  v.counts_.clear();
  v.index_.clear();
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    std::size_t tab = line.rfind('\t');
    if (tab == std::string_view::npos)
      throw ParseError("vocabulary line " + std::to_string(line_no) + ": missing tab");
    std::uint64_t count = 0;
    auto cnt = line.substr(tab + 1);
    auto [p, ec] = std::from_chars(cnt.data(), cnt.data() + cnt.size(), count);
    if (ec != std::errc() || p != cnt.data() + cnt.size())
      throw ParseError("vocabulary line " + std::to_string(line_no) + ": bad count");
    std::string surface(line.substr(0, tab));
    if (v.index_.count(surface))
      throw ParseError("vocabulary line " + std::to_string(line_no) + ": duplicate token");
    v.push(std::move(surface), count);
  }
  const std::string_view reserved[] = {token::mask_surface, token::pad_surface,
                                       token::unk_surface, token::eos_surface};
  if (v.tokens_.size() < kReserved) throw ParseError("vocabulary: missing reserved header");
  for (std::size_t i = 0; i < kReserved; ++i) {
    if (v.tokens_[i] != reserved[i]) throw ParseError("vocabulary: bad reserved header");
  }
  return v;
}

std::uint64_t Vocabulary::hash() const { return fnv1a64(serialize()); }

std::vector<std::string> normalize(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    auto c = static_cast<unsigned char>(text[i]);
    if (is_space(c)) {
      flush();
    } else if (is_word_byte(c)) {
      word.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if ((c == '-' || c == '\'') && !word.empty() && i + 1 < text.size() &&
               is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
      word.push_back(static_cast<char>(c));
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      // control characters separate tokens
      flush();
    }
  }
  flush();
  return out;
}

TokenSeq tokenize(std::string_view text) {
  TokenSeq seq;
  seq.surface = normalize(text);
  seq.ids.assign(seq.surface.size(), token::unk);
  return seq;
}

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab) {
  return lookup(normalize(text), vocab);
}

TokenSeq lookup(std::vector<std::string> surfaces, const Vocabulary& vocab) {
  TokenSeq seq;
  seq.ids.reserve(surfaces.size());
  for (const auto& s : surfaces) seq.ids.push_back(vocab.id_or_unk(s));
  seq.surface = std::move(surfaces);
  return seq;
}

std::string detokenize(std::span<const std::string> surfaces) {
  std::string out;
  for (const auto& s : surfaces) {
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

Vocabulary build_vocabulary(std::span<const std::string> corpus, std::uint64_t min_count) {
  if (min_count < 1) throw InvalidArgument("min_count must be >= 1");
  std::map<std::string, std::uint64_t> counts;
  for (const auto& text : corpus) {
    for (auto& s : normalize(text)) ++counts[std::move(s)];
  }
  std::vector<std::pair<std::string, std::uint64_t>> kept;
  for (auto& [s, n] : counts) {
    if (n >= min_count) kept.emplace_back(s, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (auto& [s, n] : kept) v.push(std::move(s), n);
  return v;
}

std::vector<std::string> corpus_texts(std::span<const ArgumentInstance> instances) {
  std::vector<std::string> texts;
  for (const auto& inst : instances) {
    texts.push_back(inst.topic);
    for (const auto& c : inst.claims) {
      texts.push_back(c.claim);
      for (const auto& e : c.evidence) texts.push_back(e);
    }
    if (inst.reference_summary) texts.push_back(*inst.reference_summary);
  }
  return texts;
}

}  // namespace remask
