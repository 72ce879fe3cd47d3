#pragma once

#include "coherency/dictionary.hpp"
#include "coherency/mcg.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace coherency {

enum class NeighborAggregate { MaxAbs, RootSumSquares };

// Linear ramp of the MCG-IRLS exponents: p goes p_start -> p_end and q goes
// q_start -> q_end over the first ramp_iters reweighting steps, then stays put.
struct PqSchedule {
  int ramp_iters = 20;
  double p_start = 0.0;
  double p_end = 2.0;
  double q_start = 2.0;
  double q_end = 0.0;

  double p(int step) const;
  double q(int step) const;
  bool finished(int step) const { return step >= ramp_iters; }
};

struct SolverConfig {
  int max_iters = 200;
  // Damping starts at damping_init and is multiplied by damping_decay whenever
  // the relative iterate change drops below damping_step_tol, down to
  // damping_min. It is measured relative to the magnitude of the minimum-norm
  // starting point (squared for the quadratic weights).
  double damping_init = 1e-1;
  double damping_decay = 0.5;
  double damping_step_tol = 1e-2;
  double damping_min = 1e-8;
  double convergence_tol = 1e-6;
  // Support threshold, relative to max |x_i|.
  double support_tol = 1e-4;
  // sigma^2 > 0 switches IRLS to the regularized (noisy) closed form.
  double noise_variance = 0.0;
  PqSchedule pq;
  NeighborAggregate neighbor_aggregate = NeighborAggregate::MaxAbs;
  // Combinatorial solver: candidates with residual <= feasibility_tol * |y| are feasible.
  double feasibility_tol = 1e-6;
  bool record_trace = false;

  void validate() const;
};

// One reweighting step. `objective` is the alternation functional
// sum_i [w_i (x_i^2 + damping) - log w_i] for the quadratic weights; the
// quadratic part x^T W x is kept separately.
struct IterationTrace {
  double damping = 0.0;
  double relative_change = 0.0;
  double weighted_quadratic = 0.0;
  double objective = 0.0;
};

struct SparseSolution {
  Eigen::VectorXd coefficients;
  std::vector<int> support;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
  std::vector<IterationTrace> trace;
};

// Support of x after thresholding at support_tol * max |x_i|.
std::vector<int> support_of(const Eigen::VectorXd& x, double support_tol);

// min |x|_1 s.t. Dx = y, via reweighting with w_i = 1 / (|x_i| + damping).
SparseSolution solve_l1(const Dictionary& dict, const Eigen::VectorXd& y, const SolverConfig& cfg = {});

// IRLS with w_i = 1 / (x_i^2 + damping), starting from W = I.
SparseSolution solve_irls(const Dictionary& dict, const Eigen::VectorXd& y, const SolverConfig& cfg = {});

// IRLS whose weights also look at each atom's graph neighborhood:
// w_i = (x_i^2 + d)^(-p/2) * (f_i^2 + d)^(-q/2), f_i aggregating |x_j| over neighborhood(i).
SparseSolution solve_mcg_irls(const Dictionary& dict, const CoherencyGraph& graph, const Eigen::VectorXd& y,
                              const SolverConfig& cfg = {});

// Atom split into a well-conditioned part d1 and an ill part d2. Either may be empty.
struct Partition {
  std::vector<int> d1;
  std::vector<int> d2;

  void validate(int num_atoms) const;
};

struct CombinatorialSolution {
  SparseSolution solution;
  // D2 atoms of the winning column set.
  std::vector<int> winning_d2;
  std::size_t subproblems = 0;
  std::size_t feasible = 0;
};

// Solves the l1 problem on d1 plus every P-subset of d2 and keeps the
// sparsest feasible candidate (ties: smaller l1 norm, then earlier subset).
CombinatorialSolution solve_combinatorial(const Dictionary& dict, const Partition& part, int p,
                                          const Eigen::VectorXd& y, const SolverConfig& cfg = {},
                                          const EnumerationLimits& limits = {});

// d2 = the m atoms with the most ill-subset memberships (ties: larger summed
// delta, then lower index); d1 = the rest.
Partition rank_illness(const CoherencyGraph& graph, int m);

struct ErrorProbability {
  double exact = 0.0;
  double bound = 0.0;
};

// Probability that a uniformly random s-support has more than p atoms in a
// fixed m2-atom part of K atoms, from exact big-integer binomials, plus the
// closed-form upper bound (s-p) (s/(K-s+1))^(p-1) m2^(p+1) s^3 / (p+1)!.
ErrorProbability error_probability(int k, int s, int m2, int p);

std::string solution_to_json(const SparseSolution& sol);

}  // namespace coherency
