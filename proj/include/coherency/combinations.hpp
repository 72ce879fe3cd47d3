#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace coherency {

// C(n, k), saturating at UINT64_MAX instead of overflowing.
std::uint64_t binomial(int n, int k);

// Writes the rank-th k-subset of {0..n-1} in lexicographic order into out.
// rank must be below binomial(n, k).
void unrank_combination(std::uint64_t rank, int n, std::span<int> out);

// Advances c to the lexicographically next k-subset of {0..n-1}.
// Returns false (leaving c unspecified) when c was the last one.
bool next_combination(std::span<int> c, int n);

// Splits [0, total) into at most `parts` contiguous ranges of near-equal size.
struct RankRange {
  std::uint64_t begin;
  std::uint64_t end;
};
std::vector<RankRange> partition_ranks(std::uint64_t total, std::uint64_t parts);

// Calls fn(std::span<const int>) for every k-subset with rank in [begin, end),
// in lexicographic order.
template <class Fn>
void for_each_combination(int n, int k, std::uint64_t begin, std::uint64_t end, Fn&& fn) {
  if (begin >= end) return;
  std::vector<int> c(static_cast<std::size_t>(k));
  unrank_combination(begin, n, c);
  for (std::uint64_t r = begin; r < end; ++r) {
    fn(std::span<const int>(c));
    if (r + 1 < end) next_combination(c, n);
  }
}

}  // namespace coherency
