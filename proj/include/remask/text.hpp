#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "remask/corpus.hpp"

namespace remask {

bool is_stopword(std::string_view surface);
/// Non-stopword, non-reserved surface with at least one alphanumeric byte
/// (or any byte >= 0x80).
bool is_content_token(std::string_view surface);
bool is_sentence_terminator(std::string_view surface);
bool is_negation(std::string_view surface);

/// Half-open [begin, end) ranges. A sentence ends at (and includes) a `.`,
/// `!` or `?`; trailing tokens without a terminator form the last sentence.
std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(
    std::span<const std::string> surfaces);

std::unordered_set<std::string> content_set(std::span<const std::string> surfaces);
std::unordered_set<std::string> content_set(std::string_view text);

/// Content tokens of every claim and evidence text of the instance.
std::unordered_set<std::string> support_set(const ArgumentInstance& instance);

/// Smoothed inverse document frequency, idf(t) = ln((N + 1) / (df(t) + 1)) + 1.
class IdfTable {
 public:
  IdfTable() = default;
  explicit IdfTable(std::span<const std::string> documents);

  /// Evidence pool of the dataset: one document per evidence text.
  static IdfTable from_evidence(std::span<const ArgumentInstance> instances);

  double idf(const std::string& surface) const;
  std::size_t documents() const { return documents_; }

 private:
  std::size_t documents_ = 0;
  std::unordered_map<std::string, std::size_t> df_;
};

}  // namespace remask
