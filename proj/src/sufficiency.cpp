#include "remask/sufficiency.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

#include "prompt_assets.hpp"
#include "remask/error.hpp"

namespace remask {

using nlohmann::json;

std::string_view to_string(ScoreSource source) {
  switch (source) {
    case ScoreSource::heuristic: return "heuristic";
    case ScoreSource::classifier: return "classifier";
    case ScoreSource::cot: return "cot";
    case ScoreSource::combined: return "combined";
  }
  return "heuristic";
}

Eigen::VectorXd broadcast_span_scores(std::span<const ScoredSpan> spans, std::size_t length) {
  Eigen::VectorXd scores = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(length),
                                                     std::numeric_limits<double>::infinity());
  for (const auto& s : spans) {
    if (s.begin > s.end || s.end > length)
      throw InvalidArgument("span [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                            ") lies outside [0, " + std::to_string(length) + ")");
    for (std::size_t i = s.begin; i < s.end; ++i) {
      auto& v = scores[static_cast<Eigen::Index>(i)];
      v = std::min(v, s.score);
    }
  }
  std::string gaps;
  for (std::size_t i = 0; i < length; ++i) {
    if (std::isinf(scores[static_cast<Eigen::Index>(i)])) {
      if (!gaps.empty()) gaps += ", ";
      gaps += std::to_string(i);
    }
  }
  if (!gaps.empty()) throw InvalidArgument("spans leave positions uncovered: " + gaps);
  return scores;
}

std::vector<std::pair<std::size_t, std::size_t>> canvas_sentences(const SummaryState& state) {
  const std::size_t content = state.content_length();
  return sentence_spans(std::span<const std::string>(state.tokens.surface.data(), content));
}

namespace {

void require_unmasked(const SummaryState& state, std::string_view who) {
  if (state.masked_count() != 0)
    throw InvalidArgument(std::string(who) + " needs a fully unmasked state");
}

/// Spans for each content sentence plus the tail, broadcast, and bound.
SufficiencyProfile finish_profile(const SummaryState& state,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& sentences,
                                  const std::vector<double>& sentence_scores, ScoreSource source) {
  SufficiencyProfile profile;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    profile.spans.push_back({sentences[i].first, sentences[i].second,
                             std::clamp(sentence_scores[i], 0.0, 1.0), source});
  }
  const std::size_t content = state.content_length();
  if (content < state.length()) profile.spans.push_back({content, state.length(), 1.0, source});
  profile.scores = broadcast_span_scores(profile.spans, state.length());
  profile.summary_hash = state.hash();
  return profile;
}

std::string sentence_text(const SummaryState& state, std::pair<std::size_t, std::size_t> s) {
  return detokenize(std::span<const std::string>(state.tokens.surface.data() + s.first,
                                                 s.second - s.first));
}

}  // namespace

// ---------------------------------------------------------------------------

std::vector<double> sentence_sufficiency(std::span<const std::string> surfaces,
                                         std::span<const std::pair<std::size_t, std::size_t>> sentences,
                                         const ArgumentInstance& input, const IdfTable& idf) {
  const auto support = support_set(input);
  std::vector<double> scores;
  std::vector<std::unordered_set<std::string>> seen;
  for (auto [b, e] : sentences) {
    auto content = content_set(surfaces.subspan(b, e - b));
    double score = 0.0;
    if (!content.empty()) {
      double grounded = 0.0;
      double total = 0.0;
      for (const auto& t : content) {
        const double w = idf.idf(t);
        total += w;
        if (support.count(t)) grounded += w;
      }
      score = grounded / total;
    }
    for (const auto& earlier : seen) {
      if (earlier.empty()) continue;
      std::size_t shared = 0;
      for (const auto& t : earlier) shared += content.count(t);
      if (static_cast<double>(shared) >= kRedundancyOverlap * static_cast<double>(earlier.size())) {
        score *= kRedundancyPenalty;
        break;
      }
    }
    scores.push_back(score);
    seen.push_back(std::move(content));
  }
  return scores;
}

SufficiencyProfile heuristic_scores(const SummaryState& state, const ArgumentInstance& input,
                                    const IdfTable& idf) {
  require_unmasked(state, "heuristic scorer");
  const auto sentences = canvas_sentences(state);
  const auto scores = sentence_sufficiency(state.tokens.surface, sentences, input, idf);
  return finish_profile(state, sentences, scores, ScoreSource::heuristic);
}

SufficiencyProfile heuristic_scores(const SummaryState& state, const ArgumentInstance& input) {
  const ArgumentInstance one[] = {input};
  return heuristic_scores(state, input, IdfTable::from_evidence(one));
}

// ---------------------------------------------------------------------------
// Perturbations

std::string_view to_string(Perturbation p) {
  switch (p) {
    case Perturbation::none: return "none";
    case Perturbation::hallucinated: return "hallucinated";
    case Perturbation::contradictory: return "contradictory";
    case Perturbation::unsupported: return "unsupported";
  }
  return "none";
}

namespace {

const std::set<std::string_view> kAuxiliaries = {"is",    "are",   "was",  "were",   "may",
                                                 "might", "can",   "could", "should", "would",
                                                 "will",  "must",  "does", "do",     "did",
                                                 "has",   "have",  "had"};

const std::map<std::string_view, std::string_view> kAntonyms = {
    {"safe", "dangerous"},        {"dangerous", "safe"},         {"increase", "decrease"},
    {"decrease", "increase"},     {"increases", "decreases"},    {"decreases", "increases"},
    {"support", "oppose"},        {"oppose", "support"},         {"supports", "opposes"},
    {"opposes", "supports"},      {"benefit", "harm"},           {"harm", "benefit"},
    {"benefits", "harms"},        {"harms", "benefits"},         {"more", "less"},
    {"less", "more"},             {"higher", "lower"},           {"lower", "higher"},
    {"effective", "ineffective"}, {"ineffective", "effective"},  {"protects", "endangers"},
    {"endangers", "protects"},    {"good", "bad"},               {"bad", "good"},
    {"rare", "common"},           {"common", "rare"},            {"strong", "weak"},
    {"weak", "strong"},           {"cheap", "expensive"},        {"expensive", "cheap"},
    {"reduces", "raises"},        {"raises", "reduces"},         {"improves", "worsens"},
    {"worsens", "improves"}};

std::vector<std::vector<std::string>> split_sentences(std::string_view text) {
  auto surfaces = normalize(text);
  std::vector<std::vector<std::string>> out;
  for (auto [b, e] : sentence_spans(surfaces)) {
    out.emplace_back(surfaces.begin() + static_cast<std::ptrdiff_t>(b),
                     surfaces.begin() + static_cast<std::ptrdiff_t>(e));
  }
  return out;
}

std::unordered_set<std::string> claim_unit_content(const ClaimUnit& c) {
  auto s = content_set(c.claim);
  for (const auto& e : c.evidence) s.merge(content_set(e));
  return s;
}

std::size_t best_claim(const std::unordered_set<std::string>& content, const ArgumentInstance& inst) {
  std::size_t best = 0;
  std::size_t best_overlap = 0;
  for (std::size_t i = 0; i < inst.claims.size(); ++i) {
    auto unit = claim_unit_content(inst.claims[i]);
    std::size_t overlap = 0;
    for (const auto& t : content) overlap += unit.count(t);
    if (overlap > best_overlap) {
      best = i;
      best_overlap = overlap;
    }
  }
  return best;
}

/// First min(k, n) entries of a rng-driven partial shuffle of [0, n).
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

std::optional<std::string> contradict(std::string_view sentence) {
  auto tokens = normalize(sentence);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (is_negation(tokens[i])) {
      tokens.erase(tokens.begin() + static_cast<std::ptrdiff_t>(i));
      return detokenize(tokens);
    }
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (kAuxiliaries.count(tokens[i])) {
      tokens.insert(tokens.begin() + static_cast<std::ptrdiff_t>(i + 1), "not");
      return detokenize(tokens);
    }
  }
  for (auto& t : tokens) {
    auto it = kAntonyms.find(t);
    if (it != kAntonyms.end()) {
      t = std::string(it->second);
      return detokenize(tokens);
    }
  }
  return std::nullopt;
}

PerturbationSet generate_perturbations(const ArgumentInstance& instance,
                                       std::span<const ArgumentInstance> corpus, Rng& rng,
                                       std::size_t k_per_type) {
  if (!instance.reference_summary)
    throw InvalidArgument("instance '" + instance.id + "' has no reference summary");
  validate(instance);

  PerturbationSet out;
  const auto sentences = split_sentences(*instance.reference_summary);
  std::vector<std::string> texts;
  std::vector<std::size_t> grounding;
  for (const auto& s : sentences) {
    texts.push_back(detokenize(s));
    grounding.push_back(best_claim(content_set(s), instance));
  }

  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto& claim = instance.claims[grounding[i]];
    out.spans.push_back({texts[i], claim.claim, claim.evidence, 1, Perturbation::none, instance.id});
  }

  // contradictory
  std::vector<std::pair<std::size_t, std::string>> flipped;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto c = contradict(texts[i]); c && *c != texts[i]) flipped.emplace_back(i, *c);
  }
  for (auto j : sample_indices(flipped.size(), k_per_type, rng)) {
    const auto& [i, text] = flipped[j];
    const auto& claim = instance.claims[grounding[i]];
    out.spans.push_back({text, claim.claim, claim.evidence, 0, Perturbation::contradictory, instance.id});
  }

  // hallucinated
  std::set<std::string> own(texts.begin(), texts.end());
  std::vector<std::string> pool;
  for (const auto& other : corpus) {
    if (other.id == instance.id || !other.reference_summary) continue;
    for (const auto& s : split_sentences(*other.reference_summary)) {
      auto text = detokenize(s);
      if (!own.count(text)) pool.push_back(std::move(text));
    }
  }
  if (pool.empty()) {
    out.hallucinated_available = false;
    out.notes.push_back("hallucinated perturbations unavailable: no other instance summaries");
  } else {
    for (auto j : sample_indices(pool.size(), k_per_type, rng)) {
      const auto& claim = instance.claims[static_cast<std::size_t>(rng.below(instance.claims.size()))];
      out.spans.push_back({pool[j], claim.claim, claim.evidence, 0, Perturbation::hallucinated, instance.id});
    }
  }

  // unsupported
  std::vector<std::size_t> withholdable;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (!instance.claims[grounding[i]].evidence.empty()) withholdable.push_back(i);
  }
  for (auto j : sample_indices(withholdable.size(), k_per_type, rng)) {
    const std::size_t i = withholdable[j];
    const auto& claim = instance.claims[grounding[i]];
    const auto content = content_set(sentences[i]);
    std::vector<std::string> kept;
    for (const auto& e : claim.evidence) {
      auto ec = content_set(e);
      bool overlaps = std::any_of(content.begin(), content.end(),
                                  [&](const std::string& t) { return ec.count(t) > 0; });
      if (!overlaps) kept.push_back(e);
    }
    if (kept.size() == claim.evidence.size()) kept.clear();
    out.spans.push_back({texts[i], claim.claim, kept, 0, Perturbation::unsupported, instance.id});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classifier

ClassifierModel ClassifierModel::zero(FeatureSpec spec) {
  if (spec.dim <= kDenseFeatures)
    throw InvalidArgument("feature dimension must exceed " + std::to_string(kDenseFeatures));
  ClassifierModel m;
  m.features = spec;
  m.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.dim));
  return m;
}

namespace {

double fraction_in(const std::unordered_set<std::string>& of,
                   const std::unordered_set<std::string>& in) {
  if (of.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& t : of) n += in.count(t);
  return static_cast<double>(n) / static_cast<double>(of.size());
}

bool has_negation(std::span<const std::string> tokens) {
  return std::any_of(tokens.begin(), tokens.end(), [](const std::string& t) { return is_negation(t); });
}

std::set<std::string> bigrams(std::span<const std::string> tokens) {
  std::set<std::string> out;
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) out.insert(tokens[i] + ' ' + tokens[i + 1]);
  return out;
}

}  // namespace

Eigen::SparseVector<double> featurize(const FeatureSpec& spec, std::string_view span,
                                      std::string_view claim, std::span<const std::string> evidence) {
  if (spec.dim <= kDenseFeatures)
    throw InvalidArgument("feature dimension must exceed " + std::to_string(kDenseFeatures));
  const auto span_tokens = normalize(span);
  const auto claim_tokens = normalize(claim);
  const auto span_content = content_set(span_tokens);
  const auto claim_content = content_set(claim_tokens);

  std::unordered_set<std::string> evidence_content;
  std::vector<std::unordered_set<std::string>> per_evidence;
  bool source_negated = has_negation(claim_tokens);
  std::set<std::string> source_bigrams = bigrams(claim_tokens);
  for (const auto& e : evidence) {
    auto toks = normalize(e);
    source_negated = source_negated || has_negation(toks);
    source_bigrams.merge(bigrams(toks));
    auto c = content_set(toks);
    evidence_content.insert(c.begin(), c.end());
    per_evidence.push_back(std::move(c));
  }
  std::unordered_set<std::string> source_content = claim_content;
  source_content.insert(evidence_content.begin(), evidence_content.end());

  std::map<std::size_t, double> values;
  values[0] = fraction_in(span_content, claim_content);
  values[1] = fraction_in(span_content, evidence_content);
  values[2] = fraction_in(span_content, source_content);
  values[3] = has_negation(span_tokens) != source_negated ? 1.0 : 0.0;
  values[4] = evidence.empty() ? 1.0 : 0.0;
  if (!per_evidence.empty()) {
    std::size_t touching = 0;
    for (const auto& ec : per_evidence) touching += fraction_in(span_content, ec) > 0.0 ? 1 : 0;
    values[5] = static_cast<double>(touching) / static_cast<double>(per_evidence.size());
  }
  values[6] = static_cast<double>(std::min<std::size_t>(span_content.size(), 20)) / 20.0;
  {
    const auto sb = bigrams(span_tokens);
    std::size_t hit = 0;
    for (const auto& b : sb) hit += source_bigrams.count(b);
    values[7] = sb.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(sb.size());
  }

  const std::uint64_t basis = splitmix64(spec.hash_seed);
  const std::size_t buckets = spec.dim - kDenseFeatures;
  auto add_group = [&](std::string_view tag, const std::vector<std::string>& grams) {
    if (grams.empty()) return;
    const double v = 1.0 / std::sqrt(static_cast<double>(grams.size()));
    for (const auto& g : grams) {
      std::string key(tag);
      key += '\x1f';
      key += g;
      values[kDenseFeatures + fnv1a64(key, basis) % buckets] += v;
    }
  };
  {
    std::vector<std::string> grams(span_tokens.begin(), span_tokens.end());
    for (const auto& b : bigrams(span_tokens)) grams.push_back(b);
    add_group("s", grams);
  }
  add_group("c", std::vector<std::string>(claim_content.begin(), claim_content.end()));
  {
    std::vector<std::string> ev(evidence_content.begin(), evidence_content.end());
    std::sort(ev.begin(), ev.end());
    add_group("e", ev);
  }

  Eigen::SparseVector<double> x(static_cast<Eigen::Index>(spec.dim));
  for (const auto& [i, v] : values) {
    if (v != 0.0) x.insert(static_cast<Eigen::Index>(i)) = v;
  }
  return x;
}

namespace {

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

std::pair<ClassifierModel, ClassifierReport> train_classifier(std::span<const LabeledSpan> data,
                                                              const ClassifierConfig& config) {
  const bool has_pos = std::any_of(data.begin(), data.end(), [](const auto& s) { return s.label == 1; });
  const bool has_neg = std::any_of(data.begin(), data.end(), [](const auto& s) { return s.label == 0; });
  if (!has_pos || !has_neg) throw InvalidArgument("classifier training data must contain both labels");
  if (!(config.lr > 0.0)) throw InvalidArgument("learning rate must be > 0");

  ClassifierModel model = ClassifierModel::zero({config.seed, config.dim});
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto dim = static_cast<Eigen::Index>(config.dim);

  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd y(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& s = data[static_cast<std::size_t>(r)];
    y(r) = s.label == 1 ? 1.0 : 0.0;
    auto x = featurize(model.features, s.span, s.claim, s.evidence);
    for (Eigen::SparseVector<double>::InnerIterator it(x); it; ++it)
      triplets.emplace_back(r, it.index(), it.value());
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> X(n, dim);
  X.setFromTriplets(triplets.begin(), triplets.end());

  auto loss_of = [&](const Eigen::VectorXd& z) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += softplus(z(i)) - y(i) * z(i);
    return total / static_cast<double>(n);
  };

  ClassifierReport report;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Eigen::VectorXd z = (X * model.weights).array() + model.bias;
    report.loss_curve.push_back(loss_of(z));
    Eigen::VectorXd residual = z.unaryExpr([](double v) { return sigmoid(v); }) - y;
    model.weights -= config.lr * (X.transpose() * residual) / static_cast<double>(n);
    model.bias -= config.lr * residual.mean();
  }
  Eigen::VectorXd z = (X * model.weights).array() + model.bias;
  report.final_loss = loss_of(z);
  report.loss_curve.push_back(report.final_loss);
  report.initial_loss = report.loss_curve.front();
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) correct += ((z(i) >= 0.0) == (y(i) == 1.0)) ? 1 : 0;
  report.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return {std::move(model), std::move(report)};
}

double classify_span(const ClassifierModel& model, std::string_view span, std::string_view claim,
                     std::span<const std::string> evidence) {
  auto x = featurize(model.features, span, claim, evidence);
  double z = model.bias;
  for (Eigen::SparseVector<double>::InnerIterator it(x); it; ++it) z += model.weights(it.index()) * it.value();
  return sigmoid(z);
}

double accuracy(const ClassifierModel& model, std::span<const LabeledSpan> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : data) {
    const bool predicted = classify_span(model, s.span, s.claim, s.evidence) >= 0.5;
    correct += predicted == (s.label == 1) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::string save_classifier(const ClassifierModel& model) {
  std::vector<double> w(model.weights.data(), model.weights.data() + model.weights.size());
  json archive = {{"format", "remask-classifier"},
                  {"version", 1},
                  {"feature_hash_seed", model.features.hash_seed},
                  {"dim", model.features.dim},
                  {"weights", w},
                  {"bias", model.bias}};
  return archive.dump() + "\n";
}

ClassifierModel load_classifier(std::string_view text) {
  json archive = json::parse(text.begin(), text.end(), nullptr, false);
  if (archive.is_discarded() || archive.value("format", "") != "remask-classifier")
    throw ParseError("not a classifier archive");
  try {
    ClassifierModel m = ClassifierModel::zero(
        {archive.at("feature_hash_seed").get<std::uint64_t>(), archive.at("dim").get<std::size_t>()});
    auto w = archive.at("weights").get<std::vector<double>>();
    if (w.size() != m.features.dim) throw ParseError("classifier weight count differs from dim");
    m.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    m.bias = archive.at("bias").get<double>();
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed classifier archive: ") + e.what());
  }
}

SufficiencyProfile classifier_profile(const SummaryState& state, const ArgumentInstance& input,
                                      const ClassifierModel& model) {
  require_unmasked(state, "classifier scorer");
  const auto sentences = canvas_sentences(state);
  std::vector<double> scores;
  for (const auto& s : sentences) {
    const auto text = sentence_text(state, s);
    double best = 0.0;
    for (const auto& c : input.claims) best = std::max(best, classify_span(model, text, c.claim, c.evidence));
    scores.push_back(best);
  }
  return finish_profile(state, sentences, scores, ScoreSource::classifier);
}

// ---------------------------------------------------------------------------
// CoT judge

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::supported: return "supported";
    case Verdict::insufficient: return "insufficient";
    case Verdict::redundant: return "redundant";
  }
  return "insufficient";
}

double verdict_score(Verdict v) {
  switch (v) {
    case Verdict::supported: return 1.0;
    case Verdict::insufficient: return 0.0;
    case Verdict::redundant: return 0.25;
  }
  return 0.0;
}

SufficiencyVerdict parse_verdict(std::string_view response) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= response.size()) {
    std::size_t end = response.find('\n', start);
    if (end == std::string_view::npos) end = response.size();
    lines.push_back(response.substr(start, end - start));
    start = end + 1;
  }
  for (std::size_t i = lines.size(); i-- > 0;) {
    std::string_view line = lines[i];
    while (!line.empty() && (std::isspace(static_cast<unsigned char>(line.front())) ||
                             line.front() == '*' || line.front() == '#'))
      line.remove_prefix(1);
    if (line.size() < 8) continue;
    std::string head(line.substr(0, 8));
    std::transform(head.begin(), head.end(), head.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (head != "VERDICT:") continue;

    std::string word;
    for (char c : line.substr(8)) {
      if (std::isalpha(static_cast<unsigned char>(c))) {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      } else if (!word.empty()) {
        break;
      }
    }
    Verdict v;
    if (word == "supported") {
      v = Verdict::supported;
    } else if (word == "insufficient") {
      v = Verdict::insufficient;
    } else if (word == "redundant") {
      v = Verdict::redundant;
    } else {
      throw MalformedVerdict(std::string(response));
    }
    std::string rationale;
    for (std::size_t j = 0; j < i; ++j) {
      rationale += lines[j];
      rationale += '\n';
    }
    while (!rationale.empty() && std::isspace(static_cast<unsigned char>(rationale.back()))) rationale.pop_back();
    std::size_t lead = 0;
    while (lead < rationale.size() && std::isspace(static_cast<unsigned char>(rationale[lead]))) ++lead;
    return {v, rationale.substr(lead), verdict_score(v)};
  }
  throw MalformedVerdict(std::string(response));
}

std::string resolve_template(std::string_view id_or_path) {
  if (id_or_path == "sufficiency_cot") return assets::kSufficiencyCot;
  if (id_or_path == "debate_speech") return assets::kDebateSpeech;
  std::ifstream in{std::filesystem::path(id_or_path)};
  if (!in) throw InvalidArgument("unknown prompt template '" + std::string(id_or_path) + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string render_template(std::string_view tmpl, std::string_view span,
                            const ArgumentInstance& context) {
  std::string claims;
  std::string evidence;
  for (std::size_t i = 0; i < context.claims.size(); ++i) {
    const auto& c = context.claims[i];
    if (!claims.empty()) claims += '\n';
    claims += std::to_string(i + 1) + ". " + c.claim;
    for (std::size_t j = 0; j < c.evidence.size(); ++j) {
      if (!evidence.empty()) evidence += '\n';
      evidence += "[" + std::to_string(i + 1) + "." + std::to_string(j + 1) + "] " + c.evidence[j];
    }
  }
  const std::pair<std::string_view, std::string> subs[] = {
      {"{{span}}", std::string(span)},
      {"{{claims}}", claims},
      {"{{evidence}}", evidence},
      {"{{topic}}", context.topic}};
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool matched = false;
    for (const auto& [key, value] : subs) {
      if (tmpl.compare(i, key.size(), key) == 0) {
        out += value;
        i += key.size();
        matched = true;
        break;
      }
    }
    if (!matched) out += tmpl[i++];
  }
  return out;
}

SufficiencyVerdict cot_judge(const ChatClient& client, std::string_view span,
                             const ArgumentInstance& context, std::string_view template_id) {
  const std::string prompt = render_template(resolve_template(template_id), span, context);
  const std::vector<ChatMessage> messages = {
      {"system", "You judge whether summary sentences are grounded in the given arguments."},
      {"user", prompt}};
  return parse_verdict(client.complete(messages));
}

SufficiencyProfile cot_profile(const SummaryState& state, const ArgumentInstance& input,
                               const ChatClient& client, std::string_view template_id) {
  require_unmasked(state, "CoT scorer");
  const auto sentences = canvas_sentences(state);
  const std::string tmpl(template_id);
  std::vector<double> scores(sentences.size(), 0.0);
  const std::size_t limit = std::max<std::size_t>(1, client.endpoint().max_in_flight);
  for (std::size_t begin = 0; begin < sentences.size(); begin += limit) {
    const std::size_t end = std::min(sentences.size(), begin + limit);
    std::vector<std::future<SufficiencyVerdict>> pending;
    for (std::size_t i = begin; i < end; ++i) {
      pending.push_back(std::async(std::launch::async, [&, i] {
        return cot_judge(client, sentence_text(state, sentences[i]), input, tmpl);
      }));
    }
    for (std::size_t i = begin; i < end; ++i) scores[i] = pending[i - begin].get().score;
  }
  return finish_profile(state, sentences, scores, ScoreSource::cot);
}

SufficiencyProfile combine_scores(const SufficiencyProfile& cls, const SufficiencyProfile& cot,
                                  double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
  if (cls.summary_hash != cot.summary_hash || cls.size() != cot.size())
    throw InvalidArgument("profiles are bound to different summaries");
  if (alpha == 1.0) return cls;
  if (alpha == 0.0) return cot;

  SufficiencyProfile out;
  out.summary_hash = cls.summary_hash;
  out.scores = alpha * cls.scores + (1.0 - alpha) * cot.scores;
  std::set<std::size_t> cuts = {0, cls.size()};
  for (const auto* p : {&cls, &cot}) {
    for (const auto& s : p->spans) {
      cuts.insert(s.begin);
      cuts.insert(s.end);
    }
  }
  for (auto it = cuts.begin(); std::next(it) != cuts.end(); ++it) {
    const std::size_t b = *it;
    const std::size_t e = *std::next(it);
    if (b < e) out.spans.push_back({b, e, out.scores[static_cast<Eigen::Index>(b)], ScoreSource::combined});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::none: return "none";
    case ScorerKind::heuristic: return "heuristic";
    case ScorerKind::classifier: return "classifier";
    case ScorerKind::cot: return "cot";
    case ScorerKind::combined: return "combined";
  }
  return "heuristic";
}

ScorerKind parse_scorer_kind(std::string_view text) {
  if (text == "none") return ScorerKind::none;
  if (text == "heuristic") return ScorerKind::heuristic;
  if (text == "classifier") return ScorerKind::classifier;
  if (text == "cot") return ScorerKind::cot;
  if (text == "combined" || text == "combine") return ScorerKind::combined;
  throw InvalidArgument("unknown scorer '" + std::string(text) + "'");
}

void Scorer::validate() const {
  if ((kind == ScorerKind::classifier || kind == ScorerKind::combined) && !classifier)
    throw InvalidArgument("scorer '" + std::string(to_string(kind)) + "' needs a classifier model");
  if ((kind == ScorerKind::cot || kind == ScorerKind::combined) && !judge)
    throw InvalidArgument("scorer '" + std::string(to_string(kind)) + "' needs an LLM endpoint");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in [0, 1]");
}

SufficiencyProfile Scorer::score(const SummaryState& state, const ArgumentInstance& input) const {
  validate();
  switch (kind) {
    case ScorerKind::none: {
      const auto sentences = canvas_sentences(state);
      return finish_profile(state, sentences, std::vector<double>(sentences.size(), 0.0),
                            ScoreSource::heuristic);
    }
    case ScorerKind::heuristic:
      return idf ? heuristic_scores(state, input, *idf) : heuristic_scores(state, input);
    case ScorerKind::classifier:
      return classifier_profile(state, input, *classifier);
    case ScorerKind::cot:
      return cot_profile(state, input, *judge, template_id);
    case ScorerKind::combined:
      return combine_scores(classifier_profile(state, input, *classifier),
                            cot_profile(state, input, *judge, template_id), alpha);
  }
  throw InvalidArgument("unknown scorer kind");
}

}  // namespace remask
