#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coherency {

// Strictly increasing, nonempty list of atom indices.
class SubsetIndex {
 public:
  SubsetIndex() = default;
  explicit SubsetIndex(std::vector<int> indices);
  SubsetIndex(std::initializer_list<int> indices) : SubsetIndex(std::vector<int>(indices)) {}

  // Throws unless every index lies in [0, num_atoms).
  void check_range(int num_atoms) const;

  std::size_t size() const noexcept { return idx_.size(); }
  bool empty() const noexcept { return idx_.empty(); }
  int operator[](std::size_t i) const { return idx_[i]; }
  auto begin() const noexcept { return idx_.begin(); }
  auto end() const noexcept { return idx_.end(); }
  bool contains(int i) const;
  const std::vector<int>& indices() const noexcept { return idx_; }
  std::span<const int> span() const noexcept { return idx_; }

  friend bool operator==(const SubsetIndex&, const SubsetIndex&) = default;
  friend auto operator<=>(const SubsetIndex& a, const SubsetIndex& b) { return a.idx_ <=> b.idx_; }

 private:
  std::vector<int> idx_;
};

// N x K matrix whose columns (atoms) have unit Euclidean norm.
class Dictionary {
 public:
  static constexpr double kUnitNormTolerance = 1e-10;

  // Scales every column to unit norm. Throws on a zero or non-finite column.
  static Dictionary normalized(Eigen::MatrixXd raw);
  // Accepts columns that are already unit norm; throws otherwise.
  static Dictionary from_unit_columns(Eigen::MatrixXd atoms);

  int rows() const noexcept { return static_cast<int>(atoms_.rows()); }
  int cols() const noexcept { return static_cast<int>(atoms_.cols()); }
  const Eigen::MatrixXd& atoms() const noexcept { return atoms_; }
  auto atom(int k) const { return atoms_.col(k); }

  Eigen::MatrixXd gram() const { return atoms_.transpose() * atoms_; }
  // Columns listed in `subset`, in order.
  Dictionary select(const SubsetIndex& subset) const;

 private:
  explicit Dictionary(Eigen::MatrixXd atoms) : atoms_(std::move(atoms)) {}
  Eigen::MatrixXd atoms_;
};

Dictionary normalize_columns(Eigen::MatrixXd raw);

// Entries i.i.d. standard normal from mt19937_64(seed), filled column by column.
Dictionary gen_gaussian(int n, int k, std::uint64_t seed);
// Atom k samples cos(pi (2i + 1) k / (2K)) at i = 0..N-1.
Dictionary gen_odct(int n, int k);
// Separable 2D overcomplete DCT on an n1 x n2 patch. `redundancy` must be a
// perfect square r*r; each axis then uses r times as many 1D atoms.
Dictionary gen_odct2d(int n1, int n2, int redundancy);
// Same with explicit per-axis factors. Atom (i, j), i along axis 1, sits in
// column j * (r1 n1) + i and equals the column-major vectorization of a_i b_j^T.
Dictionary gen_odct2d(int n1, int n2, int r1, int r2);

// Upper bound on how many subsets an exhaustive search may visit.
struct EnumerationLimits {
  std::uint64_t max_subsets = 10'000'000;
};

// 1 - lambda_min(D_S^T D_S), clamped to [0, 1].
double restricted_isometry_delta(const Dictionary& dict, const SubsetIndex& subset);
// Same quantity from a precomputed Gram matrix, for hot loops. `scratch` must
// hold at least s*s doubles.
double subset_delta(const Eigen::MatrixXd& gram, std::span<const int> subset, std::span<double> scratch);

// max_{i != j} |d_i^T d_j|.
double mutual_coherence(const Dictionary& dict);

struct WorstSubset {
  SubsetIndex subset;
  double delta = 0.0;
};

// Exhaustive search for the s-subset with the smallest Gram eigenvalue. Ties go
// to the lexicographically first subset. OpenMP-parallel over rank ranges.
WorstSubset worst_subdictionary(const Dictionary& dict, int s, const EnumerationLimits& limits = {});
// Single-threaded reference for worst_subdictionary.
WorstSubset worst_subdictionary_serial(const Dictionary& dict, int s, const EnumerationLimits& limits = {});

// Smallest s <= s_max whose worst delta reaches 1 - zero_tol, or nullopt.
std::optional<int> spark_bound(const Dictionary& dict, int s_max, double zero_tol = 1e-8,
                               const EnumerationLimits& limits = {});

struct ConditioningReport {
  double mutual_coherence = 0.0;
  SubsetIndex worst_subset;
  double worst_delta = 0.0;
  std::optional<int> spark;  // nullopt: not found up to s_max
};

ConditioningReport analyze_conditioning(const Dictionary& dict, int s, int s_max, double zero_tol = 1e-8,
                                        const EnumerationLimits& limits = {});

// Text format: "N K" then N rows of K values, 17 significant digits.
void write_dictionary(const std::filesystem::path& path, const Dictionary& dict);
std::string format_dictionary(const Dictionary& dict);
Dictionary read_dictionary(const std::filesystem::path& path, bool normalize = true);
Dictionary parse_dictionary(const std::string& text, bool normalize = true);

}  // namespace coherency
