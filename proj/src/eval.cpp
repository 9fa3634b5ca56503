#include "remask/eval.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unistd.h>

#include "remask/error.hpp"
#include "remask/text.hpp"

namespace remask {

using nlohmann::json;

namespace {

std::map<std::string, std::size_t> ngram_counts(std::span<const std::string> tokens, std::size_t n) {
  std::map<std::string, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
      if (j) key += '\x1f';
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

double f1(double matches, double candidate_total, double reference_total) {
  if (matches <= 0.0 || candidate_total <= 0.0 || reference_total <= 0.0) return 0.0;
  const double p = matches / candidate_total;
  const double r = matches / reference_total;
  return 2.0 * p * r / (p + r);
}

}  // namespace

double rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
               std::size_t n) {
  if (n < 1) throw InvalidArgument("rouge_n needs n >= 1");
  const auto c = ngram_counts(candidate, n);
  const auto r = ngram_counts(reference, n);
  std::size_t matches = 0;
  for (const auto& [gram, count] : c) {
    auto it = r.find(gram);
    if (it != r.end()) matches += std::min(count, it->second);
  }
  const double ct = candidate.size() >= n ? static_cast<double>(candidate.size() - n + 1) : 0.0;
  const double rt = reference.size() >= n ? static_cast<double>(reference.size() - n + 1) : 0.0;
  return f1(static_cast<double>(matches), ct, rt);
}

double rouge_n(const TokenSeq& candidate, const TokenSeq& reference, std::size_t n) {
  return rouge_n(candidate.surface, reference.surface, n);
}

namespace {

bool same_token(const std::string& x, const std::string& y) {
  if (x.size() != y.size()) return false;
  if (x.size() == 1) return x[0] == y[0];
  return x == y;
}

std::size_t lcs_row(std::span<const std::string> a, std::span<const std::string> b, std::size_t* row) {
  std::fill(row, row + b.size() + 1, 0);
  for (const auto& x : a) {
    std::size_t diagonal = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t above = row[j];
      row[j] = same_token(x, b[j - 1]) ? diagonal + 1 : std::max(above, row[j - 1]);
      diagonal = above;
    }
  }
  return row[b.size()];
}


/// Bit-parallel LCS (Hyyro) for |b| <= 64: one word per row of the DP table.
std::size_t lcs_bits(std::span<const std::string> a, std::span<const std::string> b) {
  struct Entry {
    const std::string* token;
    std::uint64_t mask;
  };
  Entry table[64];
  std::size_t distinct = 0;
  for (std::size_t j = 0; j < b.size(); ++j) {
    std::size_t k = 0;
    while (k < distinct && !same_token(*table[k].token, b[j])) ++k;
    if (k == distinct) table[distinct++] = {&b[j], 0};
    table[k].mask |= std::uint64_t{1} << j;
  }
  std::uint64_t v = ~std::uint64_t{0};
  for (const auto& x : a) {
    std::uint64_t match = 0;
    for (std::size_t k = 0; k < distinct; ++k) {
      if (same_token(*table[k].token, x)) {
        match = table[k].mask;
        break;
      }
    }
    const std::uint64_t u = v & match;
    v = (v + u) | (v - u);
  }
  const std::uint64_t used = b.size() == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << b.size()) - 1;
  return static_cast<std::size_t>(std::popcount(~v & used));
}

}  // namespace

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.size() < b.size()) std::swap(a, b);
  if (b.size() <= 64) return lcs_bits(a, b);
  std::vector<std::size_t> row(b.size() + 1);
  return lcs_row(a, b, row.data());
}

double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference) {
  return f1(static_cast<double>(lcs_length(candidate, reference)),
            static_cast<double>(candidate.size()), static_cast<double>(reference.size()));
}

double rouge_l(const TokenSeq& candidate, const TokenSeq& reference) {
  return rouge_l(candidate.surface, reference.surface);
}

// ---------------------------------------------------------------------------

namespace {

IdfTable instance_idf(const ArgumentInstance& input) {
  const ArgumentInstance one[] = {input};
  return IdfTable::from_evidence(one);
}

double idf_mass(const std::unordered_set<std::string>& tokens, const IdfTable& idf) {
  double total = 0.0;
  for (const auto& t : tokens) total += idf.idf(t);
  return total;
}

bool shares_token(const std::unordered_set<std::string>& a, const std::unordered_set<std::string>& b) {
  return std::any_of(a.begin(), a.end(), [&](const std::string& t) { return b.count(t) > 0; });
}

}  // namespace

double coverage_proxy(std::string_view summary, const ArgumentInstance& input, double threshold) {
  if (input.claims.empty()) return 0.0;
  const auto summary_content = content_set(summary);
  if (summary_content.empty()) return 0.0;
  const auto idf = instance_idf(input);
  std::size_t covered = 0;
  for (const auto& c : input.claims) {
    std::vector<std::unordered_set<std::string>> segments{content_set(c.claim)};
    for (const auto& e : c.evidence) segments.push_back(content_set(e));
    std::unordered_set<std::string> all;
    std::unordered_set<std::string> mentioned;
    for (const auto& s : segments) {
      all.insert(s.begin(), s.end());
      if (shares_token(s, summary_content)) mentioned.insert(s.begin(), s.end());
    }
    const double total = idf_mass(all, idf);
    if (total > 0.0 && idf_mass(mentioned, idf) / total > threshold) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(input.claims.size());
}

double faithfulness_proxy(std::string_view summary, const ArgumentInstance& input) {
  const auto surfaces = normalize(summary);
  const auto sentences = sentence_spans(surfaces);
  if (sentences.empty()) return 0.0;
  const auto scores = sentence_sufficiency(surfaces, sentences, input, instance_idf(input));
  double total = 0.0;
  for (double s : scores) total += s;
  return total / static_cast<double>(scores.size());
}

double conciseness_proxy(std::string_view summary, const ArgumentInstance&) {
  std::size_t n = 0;
  std::unordered_set<std::string> unique;
  for (const auto& t : normalize(summary)) {
    if (!is_content_token(t)) continue;
    ++n;
    unique.insert(t);
  }
  if (n == 0) return 1.0;
  return std::max(0.0, 1.0 - static_cast<double>(n - unique.size()) / static_cast<double>(n));
}

// ---------------------------------------------------------------------------

ExternalScorer make_command_scorer(std::string name, std::string command) {
  auto run = [command](const std::string& candidate, const std::string& reference) {
    static std::atomic<unsigned> counter{0};
    const auto dir = std::filesystem::temp_directory_path();
    const std::string stem = "remask-" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
    const auto cand_path = dir / (stem + "-candidate.txt");
    const auto ref_path = dir / (stem + "-reference.txt");
    std::ofstream(cand_path) << candidate;
    std::ofstream(ref_path) << reference;
    const std::string line = command + " '" + cand_path.string() + "' '" + ref_path.string() + "'";
    std::string output;
    int status = -1;
    if (FILE* pipe = ::popen(line.c_str(), "r")) {
      char buf[256];
      while (std::fgets(buf, sizeof buf, pipe)) output += buf;
      status = ::pclose(pipe);
    }
    std::filesystem::remove(cand_path);
    std::filesystem::remove(ref_path);
    if (status != 0) throw Error("external scorer command failed: " + command);
    try {
      std::size_t used = 0;
      double v = std::stod(output, &used);
      return v;
    } catch (const std::exception&) {
      throw Error("external scorer printed no number: " + output);
    }
  };
  return {std::move(name), run};
}

ExternalScorer make_endpoint_scorer(std::string name, std::string url,
                                    std::shared_ptr<HttpTransport> transport, RetryPolicy retry) {
  if (!transport) transport = make_http_transport();
  auto run = [url, transport, retry](const std::string& candidate, const std::string& reference) {
    json body = {{"candidate", candidate}, {"reference", reference}};
    auto resp = post_json_with_retry(*transport, url, body, {}, retry);
    json parsed = json::parse(resp.body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("score") || !parsed["score"].is_number())
      throw RemoteError("external scorer response lacks a numeric score");
    return parsed["score"].get<double>();
  };
  return {std::move(name), run};
}

// ---------------------------------------------------------------------------

InstanceScores score_summary(std::string_view summary, const ArgumentInstance& input,
                             const EvalOptions& options) {
  if (!input.reference_summary)
    throw InvalidArgument("instance '" + input.id + "' has no reference summary");
  InstanceScores s;
  s.id = input.id;
  s.summary = std::string(summary);
  const auto cand = normalize(summary);
  const auto ref = normalize(*input.reference_summary);
  s.rouge1 = rouge_n(cand, ref, 1);
  s.rouge2 = rouge_n(cand, ref, 2);
  s.rougeL = rouge_l(cand, ref);
  s.coverage = coverage_proxy(summary, input, options.coverage_threshold);
  s.faithfulness = faithfulness_proxy(summary, input);
  s.conciseness = conciseness_proxy(summary, input);
  for (const auto& ext : options.external) s.external[ext.name] = ext.score(s.summary, *input.reference_summary);
  return s;
}

EvalReport evaluate(std::span<const std::string> summaries, std::span<const ArgumentInstance> instances,
                    const EvalOptions& options) {
  if (summaries.size() != instances.size())
    throw InvalidArgument("got " + std::to_string(summaries.size()) + " summaries for " +
                          std::to_string(instances.size()) + " instances");
  EvalReport report;
  report.mean.id = "mean";
  for (std::size_t i = 0; i < instances.size(); ++i)
    report.instances.push_back(score_summary(summaries[i], instances[i], options));
  const double n = static_cast<double>(report.instances.size());
  if (n > 0) {
    auto& m = report.mean;
    for (const auto& s : report.instances) {
      m.rouge1 += s.rouge1;
      m.rouge2 += s.rouge2;
      m.rougeL += s.rougeL;
      m.coverage += s.coverage;
      m.faithfulness += s.faithfulness;
      m.conciseness += s.conciseness;
      for (const auto& [k, v] : s.external) m.external[k] += v;
    }
    for (double* v : {&m.rouge1, &m.rouge2, &m.rougeL, &m.coverage, &m.faithfulness, &m.conciseness}) *v /= n;
    for (auto& [k, v] : m.external) v /= n;
  }
  std::ostringstream threshold;
  threshold << options.coverage_threshold;
  report.config_echo["coverage_threshold"] = threshold.str();
  return report;
}

json to_json(const InstanceScores& s) {
  json j = {{"id", s.id},
            {"rouge1", s.rouge1},
            {"rouge2", s.rouge2},
            {"rougeL", s.rougeL},
            {"coverage", s.coverage},
            {"faithfulness", s.faithfulness},
            {"conciseness", s.conciseness}};
  if (!s.summary.empty()) j["summary"] = s.summary;
  if (!s.external.empty()) j["external"] = s.external;
  return j;
}

json to_json(const EvalReport& report) {
  json rows = json::array();
  for (const auto& s : report.instances) rows.push_back(to_json(s));
  json mean = to_json(report.mean);
  mean.erase("id");
  return {{"instances", rows}, {"mean", mean}, {"config", report.config_echo}};
}

namespace {

std::string fixed(double v) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4) << v;
  return ss.str();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// First `labels` columns are left-aligned, the rest right-aligned.
std::string render_table(const std::vector<std::vector<std::string>>& rows, std::size_t labels,
                         TableFormat format) {
  std::ostringstream out;
  if (format == TableFormat::csv) {
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_field(row[i]);
      out << '\n';
    }
    return out.str();
  }
  std::vector<std::size_t> width;
  for (const auto& row : rows) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      if (i) line += "  ";
      const auto pad = std::string(width[i] - rows[r][i].size(), ' ');
      line += i < labels ? rows[r][i] + pad : pad + rows[r][i];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t i = 0; i < width.size(); ++i) total += width[i] + (i ? 2 : 0);
      out << std::string(total, '-') << '\n';
    }
  }
  return out.str();
}

}  // namespace

std::string format_report(const EvalReport& report, TableFormat format) {
  std::vector<std::string> header = {"id", "R-1", "R-2", "R-L", "coverage", "faithfulness", "conciseness"};
  for (const auto& [k, v] : report.mean.external) header.push_back(k);
  std::vector<std::vector<std::string>> rows = {header};
  auto row_of = [&](const InstanceScores& s) {
    std::vector<std::string> row = {s.id,           fixed(s.rouge1),       fixed(s.rouge2),
                                    fixed(s.rougeL), fixed(s.coverage),    fixed(s.faithfulness),
                                    fixed(s.conciseness)};
    for (const auto& [k, v] : report.mean.external) {
      auto it = s.external.find(k);
      row.push_back(it == s.external.end() ? "" : fixed(it->second));
    }
    return row;
  };
  for (const auto& s : report.instances) rows.push_back(row_of(s));
  rows.push_back(row_of(report.mean));
  return render_table(rows, 1, format);
}

// ---------------------------------------------------------------------------

Rng instance_stream(std::uint64_t seed, std::string_view instance_id, std::string_view name) {
  return Rng::stream(seed ^ fnv1a64(instance_id), name);
}

std::vector<AblationCell> run_ablation(std::span<const ArgumentInstance> dataset,
                                       const DenoiserModel& model, const AblationSpec& spec) {
  std::vector<AblationCell> cells;
  if (spec.variants.empty() || spec.iteration_counts.empty()) return cells;
  for (const auto& inst : dataset) {
    if (!inst.reference_summary)
      throw InvalidArgument("instance '" + inst.id + "' has no reference summary");
  }
  const std::size_t depth = *std::max_element(spec.iteration_counts.begin(), spec.iteration_counts.end());

  std::vector<SummaryState> initial;
  for (const auto& inst : dataset) {
    Rng rng = instance_stream(spec.seed, inst.id, "fill");
    initial.push_back(generate(inst, model, spec.schedule, spec.canvas_length, rng));
  }

  for (auto variant : spec.variants) {
    std::vector<std::vector<std::string>> summaries(spec.iteration_counts.size());
    std::string error;
    try {
      Scorer scorer = spec.components;
      scorer.kind = variant;
      RefineConfig config = spec.refine;
      config.iterations = depth;
      for (std::size_t i = 0; i < dataset.size(); ++i) {
        Rng rng = instance_stream(spec.seed, dataset[i].id, "plan");
        const auto trace = refine(initial[i], dataset[i], model, scorer, config, rng);
        for (std::size_t c = 0; c < spec.iteration_counts.size(); ++c) {
          const std::size_t k = std::min(spec.iteration_counts[c], trace.records.size());
          const SummaryState& s = k == 0 ? trace.initial : trace.records[k - 1].after;
          summaries[c].push_back(summary_text(s));
        }
      }
    } catch (const std::exception& e) {
      error = e.what();
    }
    for (std::size_t c = 0; c < spec.iteration_counts.size(); ++c) {
      AblationCell cell;
      cell.variant = variant;
      cell.iterations = spec.iteration_counts[c];
      if (error.empty()) {
        try {
          cell.report = evaluate(summaries[c], dataset, spec.eval);
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
      } else {
        cell.error = error;
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string format_ablation(std::span<const AblationCell> cells, TableFormat format) {
  if (cells.empty()) return "";
  const bool one_variant = std::all_of(cells.begin(), cells.end(),
                                       [&](const auto& c) { return c.variant == cells[0].variant; });
  const bool one_count = std::all_of(cells.begin(), cells.end(),
                                     [&](const auto& c) { return c.iterations == cells[0].iterations; });
  const bool show_variant = !one_variant || one_count;
  const bool show_count = !one_count || one_variant;

  std::vector<std::string> external;
  for (const auto& c : cells) {
    if (!c.report) continue;
    for (const auto& [k, v] : c.report->mean.external)
      if (std::find(external.begin(), external.end(), k) == external.end()) external.push_back(k);
  }
  const bool any_error = std::any_of(cells.begin(), cells.end(), [](const auto& c) { return !c.report; });

  std::vector<std::string> header;
  if (show_variant) header.push_back("scorer");
  if (show_count) header.push_back("iterations");
  const std::size_t labels = header.size();
  for (const char* m : {"R-L", "faithfulness", "coverage"}) header.push_back(m);
  header.insert(header.end(), external.begin(), external.end());
  if (any_error) header.push_back("error");

  std::vector<std::vector<std::string>> rows = {header};
  for (const auto& c : cells) {
    std::vector<std::string> row;
    if (show_variant) row.emplace_back(to_string(c.variant));
    if (show_count) row.push_back(std::to_string(c.iterations));
    if (c.report) {
      const auto& m = c.report->mean;
      row.push_back(fixed(m.rougeL));
      row.push_back(fixed(m.faithfulness));
      row.push_back(fixed(m.coverage));
      for (const auto& k : external) {
        auto it = m.external.find(k);
        row.push_back(it == m.external.end() ? "" : fixed(it->second));
      }
      if (any_error) row.emplace_back("");
    } else {
      row.resize(header.size() - 1, "-");
      row.push_back(c.error);
    }
    rows.push_back(std::move(row));
  }
  return render_table(rows, labels, format);
}

json to_json(std::span<const AblationCell> cells) {
  json out = json::array();
  for (const auto& c : cells) {
    json j = {{"scorer", to_string(c.variant)}, {"iterations", c.iterations}};
    if (c.report) {
      j["report"] = to_json(*c.report);
    } else {
      j["error"] = c.error;
    }
    out.push_back(j);
  }
  return out;
}

}  // namespace remask
