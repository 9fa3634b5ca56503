#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "remask/corpus.hpp"
#include "remask/denoiser.hpp"
#include "remask/profile.hpp"
#include "remask/remote.hpp"
#include "remask/rng.hpp"
#include "remask/text.hpp"

namespace remask {

/// Token scores from span scores. Every position in [0, length) must be
/// covered; where spans overlap the minimum wins.
Eigen::VectorXd broadcast_span_scores(std::span<const ScoredSpan> spans, std::size_t length);

/// Sentence spans of the content region. The EOS/PAD tail is not included.
std::vector<std::pair<std::size_t, std::size_t>> canvas_sentences(const SummaryState& state);

// ---------------------------------------------------------------------------
// Heuristic scorer

inline constexpr double kRedundancyOverlap = 0.8;
inline constexpr double kRedundancyPenalty = 0.25;

/// Per sentence: IDF-weighted share of its distinct content tokens that occur
/// in the claims or evidence. A sentence that repeats at least 80% of an
/// earlier sentence's content tokens is multiplied by 0.25. Sentences without
/// content tokens score 0.
std::vector<double> sentence_sufficiency(std::span<const std::string> surfaces,
                                         std::span<const std::pair<std::size_t, std::size_t>> sentences,
                                         const ArgumentInstance& input, const IdfTable& idf);

/// Requires a fully unmasked state. The EOS/PAD tail scores 1.
SufficiencyProfile heuristic_scores(const SummaryState& state, const ArgumentInstance& input,
                                    const IdfTable& idf);
/// IDF over the instance's own evidence.
SufficiencyProfile heuristic_scores(const SummaryState& state, const ArgumentInstance& input);

// ---------------------------------------------------------------------------
// Perturbation labels

enum class Perturbation { none, hallucinated, contradictory, unsupported };

std::string_view to_string(Perturbation p);

struct LabeledSpan {
  std::string span;
  std::string claim;
  std::vector<std::string> evidence;
  int label = 1;  // 1 = sufficient
  Perturbation perturbation = Perturbation::none;
  std::string instance_id;
};

struct PerturbationSet {
  std::vector<LabeledSpan> spans;
  bool hallucinated_available = true;
  std::vector<std::string> notes;
};

/// Negation removal when the sentence has one, otherwise `not` after the first
/// auxiliary/modal, otherwise an antonym swap. Empty when no rule applies.
std::optional<std::string> contradict(std::string_view sentence);

/// Positives are the reference sentences paired with their best-overlapping
/// claim. Up to `k_per_type` negatives of each type follow: contradictory
/// (see contradict), hallucinated (a sentence of another instance's summary)
/// and unsupported (a positive with its overlapping evidence withheld).
PerturbationSet generate_perturbations(const ArgumentInstance& instance,
                                       std::span<const ArgumentInstance> corpus, Rng& rng,
                                       std::size_t k_per_type);

// ---------------------------------------------------------------------------
// Classifier

struct FeatureSpec {
  std::uint64_t hash_seed = 0;
  std::size_t dim = 4096;
};

/// Leading dense overlap features; hashed n-grams fill the rest.
inline constexpr std::size_t kDenseFeatures = 8;

struct ClassifierModel {
  FeatureSpec features;
  Eigen::VectorXd weights;
  double bias = 0.0;

  static ClassifierModel zero(FeatureSpec spec);
};

/// Segment-tagged hashed n-grams over span (uni+bigrams), claim and evidence
/// (unigrams), plus cross-segment overlap features.
Eigen::SparseVector<double> featurize(const FeatureSpec& spec, std::string_view span,
                                      std::string_view claim, std::span<const std::string> evidence);

struct ClassifierConfig {
  std::size_t epochs = 300;
  double lr = 1.0;
  std::uint64_t seed = 0;
  std::size_t dim = 4096;
};

struct ClassifierReport {
  std::vector<double> loss_curve;  // mean BCE before each epoch, then the final value
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double train_accuracy = 0.0;
};

/// Full-batch gradient descent on mean binary cross-entropy from zero weights.
std::pair<ClassifierModel, ClassifierReport> train_classifier(std::span<const LabeledSpan> data,
                                                              const ClassifierConfig& config);

double classify_span(const ClassifierModel& model, std::string_view span, std::string_view claim,
                     std::span<const std::string> evidence);

/// Fraction of spans whose thresholded score (>= 0.5) matches the label.
double accuracy(const ClassifierModel& model, std::span<const LabeledSpan> data);

std::string save_classifier(const ClassifierModel& model);
ClassifierModel load_classifier(std::string_view archive);

/// Per sentence: max over claims of classify_span. EOS/PAD tail scores 1.
SufficiencyProfile classifier_profile(const SummaryState& state, const ArgumentInstance& input,
                                      const ClassifierModel& model);

// ---------------------------------------------------------------------------
// Chain-of-thought judge

enum class Verdict { supported, insufficient, redundant };

std::string_view to_string(Verdict v);

struct SufficiencyVerdict {
  Verdict category = Verdict::insufficient;
  std::string rationale;
  double score = 0.0;
};

/// supported 1.0, insufficient 0.0, redundant 0.25.
double verdict_score(Verdict v);

/// Uses the last line of the form `VERDICT: <category>`; everything before it
/// is the rationale. Throws MalformedVerdict otherwise.
SufficiencyVerdict parse_verdict(std::string_view response);

/// Built-in ids are "sufficiency_cot" and "debate_speech"; anything else is
/// read as a file path.
std::string resolve_template(std::string_view id_or_path);

/// Substitutes {{span}}, {{claims}}, {{evidence}} and {{topic}}.
std::string render_template(std::string_view tmpl, std::string_view span,
                            const ArgumentInstance& context);

SufficiencyVerdict cot_judge(const ChatClient& client, std::string_view span,
                             const ArgumentInstance& context,
                             std::string_view template_id = "sufficiency_cot");

/// One judge call per sentence, at most endpoint().max_in_flight at a time.
SufficiencyProfile cot_profile(const SummaryState& state, const ArgumentInstance& input,
                               const ChatClient& client,
                               std::string_view template_id = "sufficiency_cot");

/// s_i = alpha * s_cls + (1 - alpha) * s_cot. alpha 1 and 0 return the
/// respective input unchanged.
SufficiencyProfile combine_scores(const SufficiencyProfile& classifier_profile,
                                  const SufficiencyProfile& cot_profile, double alpha);

// ---------------------------------------------------------------------------

enum class ScorerKind { none, heuristic, classifier, cot, combined };

std::string_view to_string(ScorerKind kind);
ScorerKind parse_scorer_kind(std::string_view text);

/// Bundles whichever diagnosis components a scorer kind needs.
struct Scorer {
  ScorerKind kind = ScorerKind::heuristic;
  std::shared_ptr<const IdfTable> idf;
  std::shared_ptr<const ClassifierModel> classifier;
  std::shared_ptr<const ChatClient> judge;
  std::string template_id = "sufficiency_cot";
  double alpha = 0.5;

  /// Throws InvalidArgument if a required component is missing.
  void validate() const;

  /// `none` yields 0 over the content region: nothing is known to be grounded.
  SufficiencyProfile score(const SummaryState& state, const ArgumentInstance& input) const;
};

}  // namespace remask
