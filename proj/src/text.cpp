#include "remask/text.hpp"

#include <array>
#include <cctype>
#include <cmath>

namespace remask {

namespace {

constexpr std::array<std::string_view, 50> kStopwords = {
    "the",  "a",     "an",    "and",   "or",    "but",    "if",    "of",   "to",    "in",
    "on",   "at",    "by",    "for",   "with",  "from",   "as",    "into", "about", "than",
    "then", "so",    "such",  "is",    "are",   "was",    "were",  "be",   "been",  "being",
    "has",  "have",  "had",   "do",    "does",  "did",    "will",  "would", "can",  "could",
    "may",  "might", "must",  "should", "it",   "its",    "this",  "that", "these", "their"};

}  // namespace

bool is_stopword(std::string_view surface) {
  for (auto w : kStopwords) {
    if (w == surface) return true;
  }
  return false;
}

bool is_content_token(std::string_view surface) {
  if (surface.empty() || is_reserved_surface(surface) || is_stopword(surface)) return false;
  for (unsigned char c : surface) {
    if (c >= 0x80 || std::isalnum(c)) return true;
  }
  return false;
}

bool is_sentence_terminator(std::string_view surface) {
  return surface == "." || surface == "!" || surface == "?";
}

bool is_negation(std::string_view surface) {
  return surface == "not" || surface == "no" || surface == "never" || surface == "n't" ||
         surface == "cannot" || surface == "without";
}

std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(
    std::span<const std::string> surfaces) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    if (is_sentence_terminator(surfaces[i])) {
      spans.emplace_back(begin, i + 1);
      begin = i + 1;
    }
  }
  if (begin < surfaces.size()) spans.emplace_back(begin, surfaces.size());
  return spans;
}

std::unordered_set<std::string> content_set(std::span<const std::string> surfaces) {
  std::unordered_set<std::string> out;
  for (const auto& s : surfaces) {
    if (is_content_token(s)) out.insert(s);
  }
  return out;
}

std::unordered_set<std::string> content_set(std::string_view text) {
  auto surfaces = normalize(text);
  return content_set(surfaces);
}

std::unordered_set<std::string> support_set(const ArgumentInstance& instance) {
  std::unordered_set<std::string> out;
  for (const auto& c : instance.claims) {
    out.merge(content_set(c.claim));
    for (const auto& e : c.evidence) out.merge(content_set(e));
  }
  return out;
}

IdfTable::IdfTable(std::span<const std::string> documents) : documents_(documents.size()) {
  for (const auto& doc : documents) {
    for (const auto& t : content_set(doc)) ++df_[t];
  }
}

IdfTable IdfTable::from_evidence(std::span<const ArgumentInstance> instances) {
  std::vector<std::string> docs;
  for (const auto& inst : instances) {
    for (const auto& c : inst.claims) {
      for (const auto& e : c.evidence) docs.push_back(e);
    }
  }
  return IdfTable(docs);
}

double IdfTable::idf(const std::string& surface) const {
  auto it = df_.find(surface);
  std::size_t df = it == df_.end() ? 0 : it->second;
  return std::log(static_cast<double>(documents_ + 1) / static_cast<double>(df + 1)) + 1.0;
}

}  // namespace remask
