#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "remask/denoiser.hpp"
#include "remask/profile.hpp"
#include "remask/rng.hpp"

namespace remask {

enum class Granularity { token, sentence };

Granularity parse_granularity(std::string_view text);

struct MaskConfig {
  double lambda = 0.1;
  double r = 0.2;
  double r_decay = 1.0;
  double epsilon_converged = 1e-6;
  Granularity granularity = Granularity::token;

  /// Throws InvalidArgument when a field is out of range.
  void validate() const;
};

/// The set M of positions to (re)mask, with the weights it was chosen from.
struct MaskPlan {
  std::vector<std::size_t> positions;  // ascending
  std::vector<std::size_t> candidates;  // ascending
  std::vector<double> realized_weights;  // aligned with candidates
  double r = 0.0;
  double lambda = 0.0;
  bool converged = false;
};

/// round(r * n), half away from zero.
std::size_t plan_count(double r, std::size_t n);

/// Training-time corruption: exactly round(ratio * L) positions (at least one
/// when ratio > 0) chosen uniformly without replacement by a partial
/// Fisher-Yates shuffle driven by rng.below().
std::pair<SummaryState, MaskPlan> corrupt(const TokenSeq& reference, double ratio, Rng& rng);

/// Sufficiency-guided corruption. For each candidate in ascending order one
/// draw u_i = rng.uniform() is taken, and
///   weight_i = (1 - s_i) + lambda * u_i.
/// The round(r * |candidates|) largest weights are selected, lower index
/// first on ties. When sum_i max(weight_i, 0) < epsilon the plan is empty and
/// marked converged.
MaskPlan sufficiency_mask_plan(const SufficiencyProfile& profile,
                               std::span<const std::size_t> candidates, const MaskConfig& config,
                               Rng& rng);

/// Masks whole sentences of the content region: the top round(r * sentences)
/// by 1 - mean(s) over the sentence, lower index first on ties.
MaskPlan sentence_mask_plan(const SummaryState& state, const SufficiencyProfile& profile,
                            const MaskConfig& config);

/// Uniform random subset of round(r * |candidates|) positions, used when no
/// sufficiency signal is available.
MaskPlan random_mask_plan(std::span<const std::size_t> candidates, double r, Rng& rng);

SummaryState apply_plan(const SummaryState& state, const MaskPlan& plan);

nlohmann::json to_json(const MaskPlan& plan);

}  // namespace remask
