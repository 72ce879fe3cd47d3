#pragma once

#include "coherency/dictionary.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <random>
#include <string>

namespace testing {

// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("coherency_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Eigen::MatrixXd random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline Eigen::VectorXd random_vector(int n, std::mt19937_64& rng) { return random_matrix(n, 1, rng).col(0); }

inline coherency::Dictionary random_dictionary(int rows, int cols, std::mt19937_64& rng) {
  return coherency::Dictionary::normalized(random_matrix(rows, cols, rng));
}

// Smallest Gram eigenvalue of the listed columns, straight from Eigen.
template <class Indices>
double eigen_delta(const coherency::Dictionary& d, const Indices& idx) {
  Eigen::MatrixXd sub(d.rows(), static_cast<Eigen::Index>(idx.size()));
  Eigen::Index j = 0;
  for (int i : idx) sub.col(j++) = d.atom(i);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sub.transpose() * sub, Eigen::EigenvaluesOnly);
  return std::clamp(1.0 - es.eigenvalues()(0), 0.0, 1.0);
}

}  // namespace testing
