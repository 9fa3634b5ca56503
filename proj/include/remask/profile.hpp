#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace remask {

enum class ScoreSource { heuristic, classifier, cot, combined };

std::string_view to_string(ScoreSource source);

struct ScoredSpan {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  double score = 0.0;
  ScoreSource source = ScoreSource::heuristic;
};

/// Token-level sufficiency s_i in [0, 1] over a whole canvas, with the span
/// judgments it was broadcast from.
struct SufficiencyProfile {
  Eigen::VectorXd scores;
  std::vector<ScoredSpan> spans;
  std::uint64_t summary_hash = 0;

  std::size_t size() const { return static_cast<std::size_t>(scores.size()); }
};

}  // namespace remask
