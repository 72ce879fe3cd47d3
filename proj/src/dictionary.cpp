#include "coherency/dictionary.hpp"

#include "coherency/combinations.hpp"
#include "coherency/error.hpp"
#include "coherency/symmetric_eigen.hpp"
#include "coherency/text_io.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace coherency {

SubsetIndex::SubsetIndex(std::vector<int> indices) : idx_(std::move(indices)) {
  if (idx_.empty()) usage_error("subset must not be empty");
  for (std::size_t i = 0; i < idx_.size(); ++i) {
    if (idx_[i] < 0) usage_error("subset index " + std::to_string(idx_[i]) + " is negative");
    if (i > 0 && idx_[i] <= idx_[i - 1]) usage_error("subset indices must be strictly increasing");
  }
}

void SubsetIndex::check_range(int num_atoms) const {
  if (!idx_.empty() && idx_.back() >= num_atoms)
    usage_error("subset index " + std::to_string(idx_.back()) + " out of range for " +
                std::to_string(num_atoms) + " atoms");
}

bool SubsetIndex::contains(int i) const { return std::binary_search(idx_.begin(), idx_.end(), i); }

Dictionary Dictionary::normalized(Eigen::MatrixXd raw) {
  if (raw.rows() == 0 || raw.cols() == 0) usage_error("dictionary must have at least one row and one column");
  if (!raw.allFinite()) usage_error("dictionary has non-finite entries");
  for (Eigen::Index k = 0; k < raw.cols(); ++k) {
    const double norm = raw.col(k).norm();
    if (norm == 0.0) usage_error("column " + std::to_string(k) + " is the zero vector");
    raw.col(k) /= norm;
  }
  return Dictionary(std::move(raw));
}

Dictionary Dictionary::from_unit_columns(Eigen::MatrixXd atoms) {
  if (atoms.rows() == 0 || atoms.cols() == 0) usage_error("dictionary must have at least one row and one column");
  if (!atoms.allFinite()) usage_error("dictionary has non-finite entries");
  for (Eigen::Index k = 0; k < atoms.cols(); ++k) {
    if (std::abs(atoms.col(k).norm() - 1.0) > kUnitNormTolerance)
      usage_error("column " + std::to_string(k) + " is not unit norm");
  }
  return Dictionary(std::move(atoms));
}

Dictionary Dictionary::select(const SubsetIndex& subset) const {
  subset.check_range(cols());
  Eigen::MatrixXd sub(atoms_.rows(), static_cast<Eigen::Index>(subset.size()));
  for (std::size_t j = 0; j < subset.size(); ++j) sub.col(static_cast<Eigen::Index>(j)) = atoms_.col(subset[j]);
  return Dictionary(std::move(sub));
}

Dictionary normalize_columns(Eigen::MatrixXd raw) { return Dictionary::normalized(std::move(raw)); }

Dictionary gen_gaussian(int n, int k, std::uint64_t seed) {
  if (n < 1 || k < 1) usage_error("gaussian dictionary needs n >= 1 and k >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd raw(n, k);
  for (int c = 0; c < k; ++c)
    for (int r = 0; r < n; ++r) raw(r, c) = normal(rng);
  return Dictionary::normalized(std::move(raw));
}

Dictionary gen_odct(int n, int k) {
  if (n < 1) usage_error("odct needs n >= 1");
  if (k < n) usage_error("odct needs k >= n (got n=" + std::to_string(n) + ", k=" + std::to_string(k) + ")");
  Eigen::MatrixXd raw(n, k);
  for (int c = 0; c < k; ++c)
    for (int r = 0; r < n; ++r)
      raw(r, c) = std::cos(std::numbers::pi * (2.0 * r + 1.0) * c / (2.0 * k));
  return Dictionary::normalized(std::move(raw));
}

Dictionary gen_odct2d(int n1, int n2, int redundancy) {
  if (redundancy < 1) usage_error("odct2d redundancy must be positive");
  const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(redundancy))));
  if (r * r != redundancy)
    usage_error("odct2d redundancy " + std::to_string(redundancy) + " is not a perfect square; pass per-axis factors");
  return gen_odct2d(n1, n2, r, r);
}

Dictionary gen_odct2d(int n1, int n2, int r1, int r2) {
  if (r1 < 1 || r2 < 1) usage_error("odct2d per-axis factors must be positive");
  const Dictionary a = gen_odct(n1, r1 * n1);
  const Dictionary b = gen_odct(n2, r2 * n2);
  const int k1 = a.cols();
  const int k2 = b.cols();
  Eigen::MatrixXd atoms(n1 * n2, k1 * k2);
  for (int j = 0; j < k2; ++j) {
    for (int i = 0; i < k1; ++i) {
      auto col = atoms.col(j * k1 + i);
      for (int q = 0; q < n2; ++q)
        for (int p = 0; p < n1; ++p) col(q * n1 + p) = a.atoms()(p, i) * b.atoms()(q, j);
    }
  }
  // Products of unit vectors are unit, up to rounding.
  return Dictionary::normalized(std::move(atoms));
}

double subset_delta(const Eigen::MatrixXd& gram, std::span<const int> subset, std::span<double> scratch) {
  const int s = static_cast<int>(subset.size());
  for (int r = 0; r < s; ++r)
    for (int c = r; c < s; ++c) scratch[static_cast<std::size_t>(r * s + c)] = gram(subset[r], subset[c]);
  const double delta = 1.0 - jacobi_min_eigenvalue(scratch, s);
  return std::clamp(delta, 0.0, 1.0);
}

double restricted_isometry_delta(const Dictionary& dict, const SubsetIndex& subset) {
  if (subset.empty()) usage_error("subset must not be empty");
  subset.check_range(dict.cols());
  const Eigen::MatrixXd& d = dict.atoms();
  const int s = static_cast<int>(subset.size());
  std::vector<double> scratch(static_cast<std::size_t>(s * s));
  for (int r = 0; r < s; ++r)
    for (int c = r; c < s; ++c) scratch[static_cast<std::size_t>(r * s + c)] = d.col(subset[r]).dot(d.col(subset[c]));
  return std::clamp(1.0 - jacobi_min_eigenvalue(scratch, s), 0.0, 1.0);
}

double mutual_coherence(const Dictionary& dict) {
  if (dict.cols() < 2) usage_error("mutual coherence needs at least two atoms");
  const Eigen::MatrixXd g = dict.gram();
  double mu = 0.0;
  for (int i = 0; i < dict.cols(); ++i)
    for (int j = i + 1; j < dict.cols(); ++j) mu = std::max(mu, std::abs(g(i, j)));
  return std::min(mu, 1.0);
}

namespace {

void check_enumeration(int k, int s, const EnumerationLimits& limits) {
  const std::uint64_t count = binomial(k, s);
  if (count > limits.max_subsets)
    usage_error("C(" + std::to_string(k) + ", " + std::to_string(s) + ") = " + std::to_string(count) +
                " subsets exceeds the enumeration cap of " + std::to_string(limits.max_subsets) +
                "; lower the subset size or raise the cap");
}

struct ChunkBest {
  std::vector<int> subset;
  double delta = -1.0;
};

ChunkBest scan_range(const Eigen::MatrixXd& gram, int k, int s, RankRange range) {
  ChunkBest best;
  std::vector<double> scratch(static_cast<std::size_t>(s * s));
  for_each_combination(k, s, range.begin, range.end, [&](std::span<const int> c) {
    const double delta = subset_delta(gram, c, scratch);
    if (delta > best.delta) {
      best.delta = delta;
      best.subset.assign(c.begin(), c.end());
    }
  });
  return best;
}

void check_worst_args(const Dictionary& dict, int s, const EnumerationLimits& limits) {
  if (s < 1 || s > dict.cols()) usage_error("subset size must lie in [1, K]");
  check_enumeration(dict.cols(), s, limits);
}

}  // namespace

WorstSubset worst_subdictionary_serial(const Dictionary& dict, int s, const EnumerationLimits& limits) {
  check_worst_args(dict, s, limits);
  const auto best = scan_range(dict.gram(), dict.cols(), s, {0, binomial(dict.cols(), s)});
  return {SubsetIndex(best.subset), best.delta};
}

WorstSubset worst_subdictionary(const Dictionary& dict, int s, const EnumerationLimits& limits) {
  check_worst_args(dict, s, limits);
  const Eigen::MatrixXd gram = dict.gram();
  const auto ranges = partition_ranks(binomial(dict.cols(), s), static_cast<std::uint64_t>(omp_get_max_threads()) * 8);
  std::vector<ChunkBest> chunks(ranges.size());
  const auto num_chunks = static_cast<std::ptrdiff_t>(ranges.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < num_chunks; ++c)
    chunks[static_cast<std::size_t>(c)] = scan_range(gram, dict.cols(), s, ranges[static_cast<std::size_t>(c)]);

  // Chunks are in rank order, so a strict comparison keeps the earliest subset on ties.
  ChunkBest best;
  for (auto& c : chunks)
    if (c.delta > best.delta) best = std::move(c);
  return {SubsetIndex(best.subset), best.delta};
}

std::optional<int> spark_bound(const Dictionary& dict, int s_max, double zero_tol, const EnumerationLimits& limits) {
  if (s_max > dict.rows() + 1) usage_error("spark search needs s_max <= N + 1");
  if (zero_tol <= 0.0 || zero_tol >= 1.0) usage_error("zero_tol must lie in (0, 1)");
  const int top = std::min(s_max, dict.cols());
  for (int s = 2; s <= top; ++s) {
    if (worst_subdictionary(dict, s, limits).delta >= 1.0 - zero_tol) return s;
  }
  return std::nullopt;
}

ConditioningReport analyze_conditioning(const Dictionary& dict, int s, int s_max, double zero_tol,
                                        const EnumerationLimits& limits) {
  ConditioningReport report;
  report.mutual_coherence = mutual_coherence(dict);
  auto worst = worst_subdictionary(dict, s, limits);
  report.worst_subset = std::move(worst.subset);
  report.worst_delta = worst.delta;
  report.spark = spark_bound(dict, s_max, zero_tol, limits);
  return report;
}

std::string format_dictionary(const Dictionary& dict) {
  std::string out = std::to_string(dict.rows()) + " " + std::to_string(dict.cols()) + "\n";
  for (int r = 0; r < dict.rows(); ++r) {
    for (int c = 0; c < dict.cols(); ++c) {
      if (c > 0) out += ' ';
      out += format_double17(dict.atoms()(r, c));
    }
    out += '\n';
  }
  return out;
}

void write_dictionary(const std::filesystem::path& path, const Dictionary& dict) {
  write_text_file_atomic(path, format_dictionary(dict));
}

Dictionary parse_dictionary(const std::string& text, bool normalize) {
  std::istringstream in(text);
  in.imbue(std::locale::classic());
  long n = 0;
  long k = 0;
  if (!(in >> n >> k) || n < 1 || k < 1) usage_error("dictionary header must be 'N K' with positive integers");
  Eigen::MatrixXd raw(n, k);
  for (long r = 0; r < n; ++r) {
    for (long c = 0; c < k; ++c) {
      if (!(in >> raw(r, c)))
        usage_error("dictionary data ended early at row " + std::to_string(r) + ", column " + std::to_string(c));
    }
  }
  std::string extra;
  if (in >> extra) usage_error("dictionary has trailing data after " + std::to_string(n * k) + " values");
  return normalize ? Dictionary::normalized(std::move(raw)) : Dictionary::from_unit_columns(std::move(raw));
}

Dictionary read_dictionary(const std::filesystem::path& path, bool normalize) {
  return parse_dictionary(read_text_file(path), normalize);
}

}  // namespace coherency
