#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "remask/corpus.hpp"
#include "remask/denoiser.hpp"
#include "remask/engine.hpp"
#include "remask/remote.hpp"
#include "remask/sufficiency.hpp"

namespace remask {

/// Clipped n-gram F1. 0 when either side has no n-grams.
double rouge_n(std::span<const std::string> candidate, std::span<const std::string> reference,
               std::size_t n);
double rouge_n(const TokenSeq& candidate, const TokenSeq& reference, std::size_t n);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// LCS F1. 0 when either side is empty.
double rouge_l(std::span<const std::string> candidate, std::span<const std::string> reference);
double rouge_l(const TokenSeq& candidate, const TokenSeq& reference);

inline constexpr double kCoverageThreshold = 0.3;

/// A claim counts as covered when its segments (the claim text and each
/// evidence text) that share a content token with the summary hold more than
/// `threshold` of the claim's IDF mass. Returns the covered fraction of claims.
double coverage_proxy(std::string_view summary, const ArgumentInstance& input,
                      double threshold = kCoverageThreshold);

/// Mean heuristic sentence sufficiency; 0 for an empty summary.
double faithfulness_proxy(std::string_view summary, const ArgumentInstance& input);

/// 1 - (duplicated content tokens / content tokens); 1 for a summary without
/// content tokens.
double conciseness_proxy(std::string_view summary, const ArgumentInstance& input);

/// Maps (candidate, reference) to a score, e.g. BLEURT or BERTScore computed
/// elsewhere.
struct ExternalScorer {
  std::string name;
  std::function<double(const std::string& candidate, const std::string& reference)> score;
};

/// Runs `command <candidate-file> <reference-file>` and reads one number
/// from its standard output.
ExternalScorer make_command_scorer(std::string name, std::string command);

/// POSTs {"candidate", "reference"} and reads {"score"}.
ExternalScorer make_endpoint_scorer(std::string name, std::string url,
                                    std::shared_ptr<HttpTransport> transport = nullptr,
                                    RetryPolicy retry = {});

struct InstanceScores {
  std::string id;
  std::string summary;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double coverage = 0.0;
  double faithfulness = 0.0;
  double conciseness = 0.0;
  std::map<std::string, double> external;
};

struct EvalReport {
  std::vector<InstanceScores> instances;
  InstanceScores mean;
  std::map<std::string, std::string> config_echo;
};

struct EvalOptions {
  double coverage_threshold = kCoverageThreshold;
  std::vector<ExternalScorer> external;
};

InstanceScores score_summary(std::string_view summary, const ArgumentInstance& input,
                             const EvalOptions& options = {});

/// summaries[i] belongs to instances[i]; every instance needs a reference.
EvalReport evaluate(std::span<const std::string> summaries, std::span<const ArgumentInstance> instances,
                    const EvalOptions& options = {});

nlohmann::json to_json(const InstanceScores& scores);
nlohmann::json to_json(const EvalReport& report);

enum class TableFormat { text, csv };

/// One row per instance followed by the mean.
std::string format_report(const EvalReport& report, TableFormat format);

// ---------------------------------------------------------------------------

struct AblationSpec {
  std::vector<ScorerKind> variants;
  std::vector<std::size_t> iteration_counts;
  DiffusionSchedule schedule;
  RefineConfig refine;
  std::size_t canvas_length = 64;
  std::uint64_t seed = 0;
  /// Components shared by all variants; `kind` is set per cell.
  Scorer components;
  EvalOptions eval;
};

struct AblationCell {
  ScorerKind variant = ScorerKind::heuristic;
  std::size_t iterations = 0;
  std::optional<EvalReport> report;
  std::string error;
};

/// One cell per (variant, iteration count), variants outer. Each instance is
/// generated once from its own seeded stream and shared by every cell; a
/// variant is refined once to the largest count and each count reads the
/// trace at that depth, which equals refining with that budget. A failing
/// cell records its error and the others still run.
std::vector<AblationCell> run_ablation(std::span<const ArgumentInstance> dataset,
                                       const DenoiserModel& model, const AblationSpec& spec);

/// Rows in cell order. Metric columns are R-L, faithfulness and coverage,
/// then any external scorers.
std::string format_ablation(std::span<const AblationCell> cells, TableFormat format);

nlohmann::json to_json(std::span<const AblationCell> cells);

/// Streams for an instance: generation uses "fill", refinement "plan".
Rng instance_stream(std::uint64_t seed, std::string_view instance_id, std::string_view name);

}  // namespace remask
