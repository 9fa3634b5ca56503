#include "remask/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "remask/error.hpp"

namespace remask {

using nlohmann::json;

std::string_view to_string(RemaskPolicy policy) {
  return policy == RemaskPolicy::random ? "random" : "low_confidence";
}

RemaskPolicy parse_remask_policy(std::string_view text) {
  if (text == "low_confidence" || text == "low-confidence") return RemaskPolicy::low_confidence;
  if (text == "random") return RemaskPolicy::random;
  throw InvalidArgument("unknown remask policy '" + std::string(text) + "'");
}

std::vector<double> DiffusionSchedule::linear_curve(std::size_t steps) {
  std::vector<double> curve(steps);
  for (std::size_t k = 0; k < steps; ++k) curve[k] = static_cast<double>(k + 1) / static_cast<double>(steps);
  return curve;
}

DiffusionSchedule DiffusionSchedule::linear(std::size_t steps, RemaskPolicy policy, FillPolicy fill) {
  return {steps, linear_curve(steps), policy, fill};
}

void DiffusionSchedule::validate() const {
  if (steps < 1) throw InvalidArgument("schedule needs at least one step");
  if (keep_fraction_curve.size() != steps)
    throw InvalidArgument("keep_fraction_curve must have one entry per step");
  double prev = 0.0;
  for (double f : keep_fraction_curve) {
    if (!(f >= prev && f <= 1.0)) throw InvalidArgument("keep_fraction_curve must rise within [0, 1]");
    prev = f;
  }
  if (keep_fraction_curve.back() != 1.0) throw InvalidArgument("keep_fraction_curve must end at 1");
}

SummaryState denoise(SummaryState state, const ArgumentInstance& input, const DenoiserModel& model,
                     const DiffusionSchedule& schedule, Rng& rng, const StepObserver& observe) {
  schedule.validate();
  const std::size_t total = state.masked_count();
  if (total == 0) return state;
  for (std::size_t k = 0; k < schedule.steps; ++k) {
    const auto open = state.masked_positions();
    SummaryState filled = fill_masks(model, state, input, rng, schedule.fill);
    const std::size_t already = total - open.size();
    const auto target = static_cast<std::size_t>(
        std::llround(schedule.keep_fraction_curve[k] * static_cast<double>(total)));
    const std::size_t keep = std::min(open.size(), target > already ? target - already : 0);
    if (keep < open.size()) {
      std::vector<std::size_t> order(open.size());
      std::iota(order.begin(), order.end(), 0);
      if (schedule.policy == RemaskPolicy::low_confidence) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          return filled.confidence[static_cast<Eigen::Index>(open[a])] >
                 filled.confidence[static_cast<Eigen::Index>(open[b])];
        });
      } else {
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
          std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
          std::swap(order[i], order[j]);
        }
      }
      for (std::size_t i = keep; i < order.size(); ++i) filled.mask(open[order[i]]);
    }
    state = std::move(filled);
    if (observe) observe(k, state);
    if (state.masked_count() == 0) break;
  }
  apply_readout(state);
  return state;
}

SummaryState generate(const ArgumentInstance& input, const DenoiserModel& model,
                      const DiffusionSchedule& schedule, std::size_t length, Rng& rng,
                      const StepObserver& observe) {
  if (length < 1) throw InvalidArgument("canvas length must be >= 1");
  return denoise(SummaryState::fully_masked(length), input, model, schedule, rng, observe);
}

void RefineConfig::validate() const {
  mask.validate();
  if (inner_steps < 1) throw InvalidArgument("inner_steps must be >= 1");
  if (!(tau >= 0.0 && tau <= 1.0)) throw InvalidArgument("tau must lie in [0, 1]");
}

bool has_converged(const SufficiencyProfile& profile, double tau) {
  return profile.size() == 0 || profile.scores.minCoeff() >= tau;
}

std::string_view to_string(Termination t) {
  return t == Termination::converged ? "converged" : "iteration_budget";
}

RefinementTrace refine(const SummaryState& state, const ArgumentInstance& input,
                       const DenoiserModel& model, const Scorer& scorer, const RefineConfig& config,
                       Rng& rng) {
  config.validate();
  scorer.validate();
  if (state.masked_count() != 0) throw InvalidArgument("refine needs a fully unmasked state");

  RefinementTrace trace;
  trace.initial = state;
  const auto inner = DiffusionSchedule::linear(config.inner_steps, RemaskPolicy::low_confidence,
                                               FillPolicy::argmax);
  MaskConfig mask = config.mask;
  SummaryState current = state;
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    rec.before = current;
    rec.profile = scorer.score(current, input);
    rec.mean_sufficiency = rec.profile.size() ? rec.profile.scores.mean() : 1.0;
    rec.min_sufficiency = rec.profile.size() ? rec.profile.scores.minCoeff() : 1.0;

    std::vector<std::size_t> candidates(current.content_length());
    std::iota(candidates.begin(), candidates.end(), 0);

    const bool sufficient = scorer.kind != ScorerKind::none && has_converged(rec.profile, config.tau);
    if (sufficient) {
      rec.plan.r = mask.r;
      rec.plan.lambda = mask.lambda;
      rec.plan.candidates = candidates;
      rec.plan.converged = true;
    } else if (scorer.kind == ScorerKind::none) {
      rec.plan = random_mask_plan(candidates, mask.r, rng);
    } else if (mask.granularity == Granularity::sentence) {
      rec.plan = sentence_mask_plan(current, rec.profile, mask);
    } else {
      rec.plan = sufficiency_mask_plan(rec.profile, candidates, mask, rng);
    }

    if (rec.plan.converged || rec.plan.positions.empty()) {
      rec.after = current;
      trace.records.push_back(std::move(rec));
      trace.terminated_by = Termination::converged;
      return trace;
    }
    current = denoise(apply_plan(current, rec.plan), input, model, inner, rng);
    rec.after = current;
    trace.records.push_back(std::move(rec));
    mask.r *= mask.r_decay;
  }
  trace.terminated_by = Termination::iteration_budget;
  return trace;
}

json to_json(const SummaryState& state) {
  std::vector<std::size_t> masked;
  for (std::size_t i = 0; i < state.length(); ++i)
    if (state.masked[i]) masked.push_back(i);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(state.hash()));
  return {{"text", summary_text(state)},
          {"tokens", state.tokens.surface},
          {"masked", masked},
          {"hash", hash}};
}

namespace {

json profile_json(const SufficiencyProfile& p) {
  json spans = json::array();
  for (const auto& s : p.spans)
    spans.push_back({{"begin", s.begin}, {"end", s.end}, {"score", s.score}, {"source", to_string(s.source)}});
  return {{"scores", std::vector<double>(p.scores.data(), p.scores.data() + p.scores.size())},
          {"spans", spans}};
}

}  // namespace

void write_trace(std::ostream& out, const RefinementTrace& trace, std::string_view id) {
  json first = {{"iteration", 0}, {"state", to_json(trace.initial)}};
  if (!id.empty()) first["id"] = id;
  if (trace.records.empty()) first["terminated_by"] = to_string(trace.terminated_by);
  out << first.dump() << '\n';
  for (std::size_t i = 0; i < trace.records.size(); ++i) {
    const auto& r = trace.records[i];
    json line = {{"iteration", r.iteration},
                 {"state_before", to_json(r.before)},
                 {"profile", profile_json(r.profile)},
                 {"plan", to_json(r.plan)},
                 {"state_after", to_json(r.after)},
                 {"metrics", {{"mean_sufficiency", r.mean_sufficiency},
                              {"min_sufficiency", r.min_sufficiency},
                              {"masked", r.plan.positions.size()}}}};
    if (!id.empty()) line["id"] = id;
    if (i + 1 == trace.records.size()) line["terminated_by"] = to_string(trace.terminated_by);
    out << line.dump() << '\n';
  }
}

}  // namespace remask
