#include "remask/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "remask/error.hpp"
#include "remask/text.hpp"

namespace remask {

Granularity parse_granularity(std::string_view text) {
  if (text == "token") return Granularity::token;
  if (text == "sentence") return Granularity::sentence;
  throw InvalidArgument("unknown granularity '" + std::string(text) + "'");
}

void MaskConfig::validate() const {
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
  if (!(r >= 0.0 && r <= 1.0)) throw InvalidArgument("r must lie in [0, 1]");
  if (!(r_decay > 0.0)) throw InvalidArgument("r_decay must be > 0");
  if (!(epsilon_converged >= 0.0)) throw InvalidArgument("epsilon_converged must be >= 0");
}

std::size_t plan_count(double r, std::size_t n) {
  return static_cast<std::size_t>(std::llround(r * static_cast<double>(n)));
}

std::pair<SummaryState, MaskPlan> corrupt(const TokenSeq& reference, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw InvalidArgument("ratio must lie in [0, 1]");
  if (reference.empty()) throw InvalidArgument("cannot corrupt an empty reference");
  const std::size_t n = reference.size();
  std::size_t k = plan_count(ratio, n);
  if (ratio > 0.0) k = std::max<std::size_t>(k, 1);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(order[i], order[j]);
  }
  MaskPlan plan;
  plan.positions.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(plan.positions.begin(), plan.positions.end());
  plan.candidates.resize(n);
  std::iota(plan.candidates.begin(), plan.candidates.end(), 0);
  plan.r = ratio;

  SummaryState state = SummaryState::from_tokens(reference);
  for (auto pos : plan.positions) state.mask(pos);
  return {std::move(state), std::move(plan)};
}

namespace {

std::vector<std::size_t> ordered_set(std::span<const std::size_t> candidates) {
  std::vector<std::size_t> c(candidates.begin(), candidates.end());
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

/// Indices of the k largest weights, ties to the lower index.
std::vector<std::size_t> top_k(const std::vector<double>& weights, std::size_t k) {
  std::vector<std::size_t> idx(weights.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

}  // namespace

MaskPlan sufficiency_mask_plan(const SufficiencyProfile& profile,
                               std::span<const std::size_t> candidates, const MaskConfig& config,
                               Rng& rng) {
  config.validate();
  MaskPlan plan;
  plan.candidates = ordered_set(candidates);
  if (plan.candidates.empty()) throw InvalidArgument("candidate set is empty");
  plan.r = config.r;
  plan.lambda = config.lambda;

  double mass = 0.0;
  plan.realized_weights.reserve(plan.candidates.size());
  for (auto pos : plan.candidates) {
    if (pos >= profile.size())
      throw InvalidArgument("profile does not cover candidate " + std::to_string(pos));
    const double u = rng.uniform();
    const double w = (1.0 - profile.scores[static_cast<Eigen::Index>(pos)]) + config.lambda * u;
    plan.realized_weights.push_back(w);
    mass += std::max(w, 0.0);
  }
  if (mass < config.epsilon_converged) {
    plan.converged = true;
    return plan;
  }
  for (auto i : top_k(plan.realized_weights, plan_count(config.r, plan.candidates.size())))
    plan.positions.push_back(plan.candidates[i]);
  std::sort(plan.positions.begin(), plan.positions.end());
  return plan;
}

MaskPlan sentence_mask_plan(const SummaryState& state, const SufficiencyProfile& profile,
                            const MaskConfig& config) {
  config.validate();
  if (config.granularity != Granularity::sentence)
    throw InvalidArgument("sentence_mask_plan requires sentence granularity");
  MaskPlan plan;
  plan.r = config.r;
  plan.lambda = config.lambda;

  const std::size_t content = state.content_length();
  if (profile.size() < content) throw InvalidArgument("profile does not cover the content region");
  std::span<const std::string> surfaces(state.tokens.surface.data(), content);
  auto sentences = sentence_spans(surfaces);
  if (sentences.empty()) {
    plan.converged = true;
    return plan;
  }

  std::vector<double> weights;
  double mass = 0.0;
  for (auto [b, e] : sentences) {
    const double mean =
        profile.scores.segment(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(e - b)).mean();
    weights.push_back(1.0 - mean);
    mass += std::max(1.0 - mean, 0.0);
    for (std::size_t i = b; i < e; ++i) {
      plan.candidates.push_back(i);
      plan.realized_weights.push_back(1.0 - mean);
    }
  }
  if (mass < config.epsilon_converged) {
    plan.converged = true;
    return plan;
  }
  for (auto s : top_k(weights, plan_count(config.r, sentences.size()))) {
    for (std::size_t i = sentences[s].first; i < sentences[s].second; ++i) plan.positions.push_back(i);
  }
  std::sort(plan.positions.begin(), plan.positions.end());
  return plan;
}

MaskPlan random_mask_plan(std::span<const std::size_t> candidates, double r, Rng& rng) {
  if (!(r >= 0.0 && r <= 1.0)) throw InvalidArgument("r must lie in [0, 1]");
  MaskPlan plan;
  plan.candidates = ordered_set(candidates);
  plan.r = r;
  plan.realized_weights.assign(plan.candidates.size(), 1.0);
  const std::size_t n = plan.candidates.size();
  const std::size_t k = plan_count(r, n);
  std::vector<std::size_t> order(plan.candidates);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(order[i], order[j]);
  }
  plan.positions.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(plan.positions.begin(), plan.positions.end());
  return plan;
}

SummaryState apply_plan(const SummaryState& state, const MaskPlan& plan) {
  SummaryState out = state;
  if (plan.converged) return out;
  for (auto pos : plan.positions) {
    if (pos >= state.length())
      throw InvalidArgument("plan position " + std::to_string(pos) + " beyond canvas length");
    out.mask(pos);
  }
  return out;
}

nlohmann::json to_json(const MaskPlan& plan) {
  return {{"positions", plan.positions},
          {"candidates", plan.candidates},
          {"weights", plan.realized_weights},
          {"r", plan.r},
          {"lambda", plan.lambda},
          {"converged", plan.converged}};
}

}  // namespace remask
