#include "lcs_oracle.hpp"

#include <cmath>
#include <cstdint>

#include "remask/eval.hpp"

namespace remask::testing {

namespace {

struct Universe {
  std::vector<std::size_t> offset;  // first index of each length
  std::vector<std::vector<int>> seqs;

  explicit Universe(std::size_t max_len) {
    std::size_t count = 1;
    for (std::size_t len = 0; len <= max_len; ++len) {
      offset.push_back(seqs.size());
      for (std::size_t code = 0; code < count; ++code) {
        std::vector<int> s(len);
        std::size_t c = code;
        for (std::size_t i = len; i-- > 0;) {
          s[i] = static_cast<int>(c % 3);
          c /= 3;
        }
        seqs.push_back(std::move(s));
      }
      count *= 3;
    }
  }

  std::size_t index_of(const std::vector<int>& s) const {
    std::size_t code = 0;
    for (int v : s) code = code * 3 + static_cast<std::size_t>(v);
    return offset[s.size()] + code;
  }

  /// Distinct subsequences, by index.
  std::vector<std::size_t> subsequences(const std::vector<int>& s) const {
    std::vector<std::size_t> out;
    std::vector<bool> seen(seqs.size(), false);
    for (std::uint32_t m = 0; m < (1u << s.size()); ++m) {
      std::vector<int> sub;
      for (std::size_t i = 0; i < s.size(); ++i)
        if (m & (1u << i)) sub.push_back(s[i]);
      auto idx = index_of(sub);
      if (!seen[idx]) {
        seen[idx] = true;
        out.push_back(idx);
      }
    }
    return out;
  }
};

}  // namespace

LcsSweep sweep_rouge_l(std::size_t max_len, double tolerance) {
  const Universe u(max_len);
  const std::size_t n = u.seqs.size();
  const std::size_t words = (n + 63) / 64;

  // contains[s] has bit b set when s is a subsequence of b.
  std::vector<std::vector<std::uint64_t>> contains(n, std::vector<std::uint64_t>(words, 0));
  std::vector<std::vector<std::size_t>> subs(n);
  for (std::size_t b = 0; b < n; ++b) {
    subs[b] = u.subsequences(u.seqs[b]);
    for (auto s : subs[b]) contains[s][b / 64] |= std::uint64_t{1} << (b % 64);
  }

  static const std::string alphabet[] = {"a", "b", "c"};
  std::vector<std::vector<std::string>> text(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int v : u.seqs[i]) text[i].push_back(alphabet[v]);

  LcsSweep sweep;
  std::vector<int> lcs(n);
  std::vector<std::uint64_t> any(words);
  for (std::size_t a = 0; a < n; ++a) {
    std::fill(lcs.begin(), lcs.end(), -1);
    const std::size_t la = u.seqs[a].size();
    for (std::size_t len = la + 1; len-- > 0;) {
      std::fill(any.begin(), any.end(), 0);
      for (auto s : subs[a]) {
        if (u.seqs[s].size() != len) continue;
        for (std::size_t w = 0; w < words; ++w) any[w] |= contains[s][w];
      }
      for (std::size_t b = 0; b < n; ++b)
        if (lcs[b] < 0 && (any[b / 64] >> (b % 64) & 1)) lcs[b] = static_cast<int>(len);
    }
    for (std::size_t b = 0; b < n; ++b) {
      const double total = static_cast<double>(la + u.seqs[b].size());
      const double expected = la == 0 || u.seqs[b].empty() ? 0.0 : 2.0 * lcs[b] / total;
      const double got = rouge_l(text[a], text[b]);
      ++sweep.pairs;
      if (std::abs(got - expected) > tolerance) {
        if (sweep.mismatches++ == 0)
          sweep.first_mismatch = std::to_string(a) + " vs " + std::to_string(b) + ": " +
                                 std::to_string(got) + " != " + std::to_string(expected);
      }
    }
  }
  return sweep;
}

}  // namespace remask::testing
