#include "coherency/combinations.hpp"

#include <cassert>
#include <limits>

namespace coherency {

std::uint64_t binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  unsigned __int128 c = 1;
  for (int i = 1; i <= k; ++i) {
    // c * (n - k + i) / i stays integral at every step.
    c = c * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
    if (c > kMax) return kMax;
  }
  return static_cast<std::uint64_t>(c);
}

void unrank_combination(std::uint64_t rank, int n, std::span<int> out) {
  const int k = static_cast<int>(out.size());
  assert(rank < binomial(n, k));
  int next = 0;
  for (int pos = 0; pos < k; ++pos) {
    // Skip leading values whose block of completions lies entirely before rank.
    for (;; ++next) {
      const std::uint64_t block = binomial(n - next - 1, k - pos - 1);
      if (rank < block) break;
      rank -= block;
    }
    out[static_cast<std::size_t>(pos)] = next++;
  }
}

bool next_combination(std::span<int> c, int n) {
  const int k = static_cast<int>(c.size());
  int i = k - 1;
  while (i >= 0 && c[static_cast<std::size_t>(i)] == n - k + i) --i;
  if (i < 0) return false;
  ++c[static_cast<std::size_t>(i)];
  for (int j = i + 1; j < k; ++j) c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
  return true;
}

std::vector<RankRange> partition_ranks(std::uint64_t total, std::uint64_t parts) {
  std::vector<RankRange> out;
  if (total == 0) return out;
  if (parts == 0) parts = 1;
  if (parts > total) parts = total;
  const std::uint64_t base = total / parts;
  const std::uint64_t extra = total % parts;
  std::uint64_t at = 0;
  for (std::uint64_t p = 0; p < parts; ++p) {
    const std::uint64_t len = base + (p < extra ? 1 : 0);
    out.push_back({at, at + len});
    at += len;
  }
  return out;
}

}  // namespace coherency
