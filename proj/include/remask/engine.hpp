#pragma once

#include <cstddef>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "remask/corpus.hpp"
#include "remask/denoiser.hpp"
#include "remask/masking.hpp"
#include "remask/profile.hpp"
#include "remask/rng.hpp"
#include "remask/sufficiency.hpp"

namespace remask {

enum class RemaskPolicy { low_confidence, random };

std::string_view to_string(RemaskPolicy policy);
RemaskPolicy parse_remask_policy(std::string_view text);

struct DiffusionSchedule {
  std::size_t steps = 8;
  /// Fraction of the initially masked positions that stay unmasked after
  /// each step. Non-decreasing, ends at 1.
  std::vector<double> keep_fraction_curve = linear_curve(8);
  RemaskPolicy policy = RemaskPolicy::low_confidence;
  FillPolicy fill = FillPolicy::sample;

  /// k/T for k = 1..T.
  static std::vector<double> linear_curve(std::size_t steps);
  static DiffusionSchedule linear(std::size_t steps, RemaskPolicy policy = RemaskPolicy::low_confidence,
                                  FillPolicy fill = FillPolicy::sample);

  void validate() const;
};

/// Called after every step with the 0-based step index and the state it left.
using StepObserver = std::function<void(std::size_t step, const SummaryState& state)>;

/// Reverse process over the currently masked positions of `state`. Each step
/// fills every mask, then remasks filled positions until the kept count
/// matches the curve. Positions unmasked on entry are never touched.
SummaryState denoise(SummaryState state, const ArgumentInstance& input, const DenoiserModel& model,
                     const DiffusionSchedule& schedule, Rng& rng, const StepObserver& observe = {});

/// Starts from an all-MASK canvas of `length`.
SummaryState generate(const ArgumentInstance& input, const DenoiserModel& model,
                      const DiffusionSchedule& schedule, std::size_t length, Rng& rng,
                      const StepObserver& observe = {});

struct RefineConfig {
  std::size_t iterations = 3;
  MaskConfig mask;
  std::size_t inner_steps = 4;
  double tau = 0.9;

  void validate() const;
};

/// min_i s_i >= tau.
bool has_converged(const SufficiencyProfile& profile, double tau);

struct IterationRecord {
  std::size_t iteration = 0;
  SummaryState before;
  SufficiencyProfile profile;
  MaskPlan plan;
  SummaryState after;
  double mean_sufficiency = 0.0;
  double min_sufficiency = 0.0;
};

enum class Termination { iteration_budget, converged };

std::string_view to_string(Termination t);

struct RefinementTrace {
  SummaryState initial;
  std::vector<IterationRecord> records;
  Termination terminated_by = Termination::iteration_budget;

  const SummaryState& final_state() const { return records.empty() ? initial : records.back().after; }
};

/// Score, plan, remask and re-fill (argmax) for up to config.iterations
/// rounds. r is multiplied by r_decay after every round. Stops early once the
/// profile reaches tau or the plan is empty. With the `none` scorer positions
/// are chosen uniformly at random.
RefinementTrace refine(const SummaryState& state, const ArgumentInstance& input,
                       const DenoiserModel& model, const Scorer& scorer, const RefineConfig& config,
                       Rng& rng);

nlohmann::json to_json(const SummaryState& state);

/// One JSON object per line: the initial state, then each iteration. The last
/// line carries `terminated_by`. A non-empty `id` is added to every line.
void write_trace(std::ostream& out, const RefinementTrace& trace, std::string_view id = {});

}  // namespace remask
