#include "coherency/solvers.hpp"

#include "coherency/combinations.hpp"
#include "coherency/error.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace coherency {

namespace {

constexpr double kTiny = 1e-300;

double ramp(double from, double to, int step, int ramp_iters) {
  if (ramp_iters <= 0 || step >= ramp_iters) return to;
  const double t = static_cast<double>(step) / ramp_iters;
  return from + (to - from) * t;
}

// x = Q D^T (D Q D^T + sigma2 I)^{-1} y with Q = diag(inv_w). With sigma2 = 0
// this is the minimum weighted-norm solution of Dx = y; with sigma2 > 0 it
// equals (D^T D + sigma2 W)^{-1} D^T y by the push-through identity.
Eigen::VectorXd weighted_update(const Eigen::MatrixXd& d, const Eigen::VectorXd& inv_w, const Eigen::VectorXd& y,
                                double sigma2) {
  const Eigen::MatrixXd dq = d * inv_w.asDiagonal();
  Eigen::MatrixXd m = dq * d.transpose();
  if (sigma2 > 0.0) m.diagonal().array() += sigma2;

  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    const double ridge = 1e-12 * m.trace() / static_cast<double>(m.rows());
    m.diagonal().array() += ridge;
    llt.compute(m);
    if (llt.info() != Eigen::Success)
      numerical_error("weighted system D W^-1 D^T is not positive definite even after a ridge of " +
                      std::to_string(ridge));
  }
  Eigen::VectorXd x = dq.transpose() * llt.solve(y);
  if (!x.allFinite()) numerical_error("weighted update produced non-finite coefficients");
  return x;
}

void check_problem(const Dictionary& dict, const Eigen::VectorXd& y) {
  if (y.size() != dict.rows())
    usage_error("observation has length " + std::to_string(y.size()) + " but the dictionary has " +
                std::to_string(dict.rows()) + " rows");
  if (!y.allFinite()) usage_error("observation has non-finite entries");
}

void finish(const Dictionary& dict, const Eigen::VectorXd& y, const SolverConfig& cfg, SparseSolution& sol) {
  sol.support = support_of(sol.coefficients, cfg.support_tol);
  sol.residual_norm = (y - dict.atoms() * sol.coefficients).norm();
}

// Shared alternation: start from W = I, then repeatedly rebuild the inverse
// weights from the current iterate and re-solve. `damping_power` is 1 when the
// weights act on |x| and 2 when they act on x^2.
template <class InverseWeights, class ScheduleDone>
SparseSolution reweighted(const Dictionary& dict, const Eigen::VectorXd& y, const SolverConfig& cfg,
                          int damping_power, InverseWeights&& inverse_weights, ScheduleDone&& schedule_done) {
  cfg.validate();
  check_problem(dict, y);
  const Eigen::MatrixXd& d = dict.atoms();
  const Eigen::Index k = d.cols();

  SparseSolution sol;
  if (y.squaredNorm() == 0.0) {
    sol.coefficients = Eigen::VectorXd::Zero(k);
    sol.converged = true;
    finish(dict, y, cfg, sol);
    return sol;
  }

  Eigen::VectorXd inv_w = Eigen::VectorXd::Ones(k);
  Eigen::VectorXd x = weighted_update(d, inv_w, y, cfg.noise_variance);
  sol.iterations = 1;
  const double unit = std::pow(x.cwiseAbs().maxCoeff(), damping_power);

  double damping = cfg.damping_init;
  for (int step = 0; sol.iterations < cfg.max_iters; ++step) {
    const double damp_abs = damping * unit;
    inverse_weights(x, damp_abs, step, inv_w);
    Eigen::VectorXd next = weighted_update(d, inv_w, y, cfg.noise_variance);
    ++sol.iterations;
    const double rel = (next - x).norm() / std::max(x.norm(), kTiny);
    x = std::move(next);

    if (cfg.record_trace) {
      IterationTrace t;
      t.damping = damp_abs;
      t.relative_change = rel;
      for (Eigen::Index i = 0; i < k; ++i) {
        const double w = 1.0 / inv_w(i);
        t.weighted_quadratic += w * x(i) * x(i);
        t.objective += w * (x(i) * x(i) + damp_abs) + std::log(inv_w(i));
      }
      sol.trace.push_back(t);
    }

    const bool at_floor = damping <= cfg.damping_min;
    if (rel < cfg.convergence_tol && at_floor && schedule_done(step)) {
      sol.converged = true;
      break;
    }
    if (rel < cfg.damping_step_tol && !at_floor) damping = std::max(damping * cfg.damping_decay, cfg.damping_min);
  }

  sol.coefficients = std::move(x);
  sol.objective = inv_w.size() > 0 ? (sol.coefficients.array().square() / inv_w.array()).sum() : 0.0;
  finish(dict, y, cfg, sol);
  return sol;
}

auto always_done = [](int) { return true; };

}  // namespace

double PqSchedule::p(int step) const { return ramp(p_start, p_end, step, ramp_iters); }
double PqSchedule::q(int step) const { return ramp(q_start, q_end, step, ramp_iters); }

void SolverConfig::validate() const {
  if (max_iters < 1) usage_error("max_iters must be at least 1");
  if (!(damping_init > 0.0)) usage_error("damping_init must be positive");
  if (!(damping_decay > 0.0 && damping_decay < 1.0)) usage_error("damping_decay must lie in (0, 1)");
  if (!(damping_step_tol > 0.0)) usage_error("damping_step_tol must be positive");
  if (!(damping_min > 0.0) || damping_min > damping_init) usage_error("damping_min must lie in (0, damping_init]");
  if (!(convergence_tol > 0.0)) usage_error("convergence_tol must be positive");
  if (!(support_tol > 0.0 && support_tol < 1.0)) usage_error("support_tol must lie in (0, 1)");
  if (!(noise_variance >= 0.0)) usage_error("noise_variance must be nonnegative");
  if (pq.ramp_iters < 0) usage_error("ramp_iters must be nonnegative");
  if (!(feasibility_tol > 0.0)) usage_error("feasibility_tol must be positive");
}

std::vector<int> support_of(const Eigen::VectorXd& x, double support_tol) {
  std::vector<int> out;
  if (x.size() == 0) return out;
  const double cut = support_tol * x.cwiseAbs().maxCoeff();
  if (cut == 0.0) return out;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (std::abs(x(i)) > cut) out.push_back(static_cast<int>(i));
  return out;
}

SparseSolution solve_l1(const Dictionary& dict, const Eigen::VectorXd& y, const SolverConfig& cfg) {
  SolverConfig l1 = cfg;
  l1.noise_variance = 0.0;
  auto sol = reweighted(
      dict, y, l1, 1,
      [](const Eigen::VectorXd& x, double damp, int, Eigen::VectorXd& inv_w) {
        inv_w = x.cwiseAbs().array() + damp;
      },
      always_done);
  sol.objective = sol.coefficients.lpNorm<1>();
  return sol;
}

SparseSolution solve_irls(const Dictionary& dict, const Eigen::VectorXd& y, const SolverConfig& cfg) {
  return reweighted(
      dict, y, cfg, 2,
      [](const Eigen::VectorXd& x, double damp, int, Eigen::VectorXd& inv_w) {
        inv_w = x.array().square() + damp;
      },
      always_done);
}

SparseSolution solve_mcg_irls(const Dictionary& dict, const CoherencyGraph& graph, const Eigen::VectorXd& y,
                              const SolverConfig& cfg) {
  if (graph.num_nodes() != dict.cols())
    usage_error("graph has " + std::to_string(graph.num_nodes()) + " nodes but the dictionary has " +
                std::to_string(dict.cols()) + " atoms");
  std::vector<SubsetIndex> hoods;
  hoods.reserve(static_cast<std::size_t>(dict.cols()));
  for (int i = 0; i < dict.cols(); ++i) hoods.push_back(neighborhood(graph, i));

  const NeighborAggregate agg = cfg.neighbor_aggregate;
  const PqSchedule pq = cfg.pq;
  return reweighted(
      dict, y, cfg, 2,
      [&](const Eigen::VectorXd& x, double damp, int step, Eigen::VectorXd& inv_w) {
        const double p = pq.p(step);
        const double q = pq.q(step);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
          double f = 0.0;
          if (agg == NeighborAggregate::MaxAbs) {
            for (int j : hoods[static_cast<std::size_t>(i)]) f = std::max(f, std::abs(x(j)));
          } else {
            for (int j : hoods[static_cast<std::size_t>(i)]) f += x(j) * x(j);
            f = std::sqrt(f);
          }
          const double own = x(i) * x(i) + damp;
          const double hood = f * f + damp;
          inv_w(i) = std::pow(own, 0.5 * p) * std::pow(hood, 0.5 * q);
        }
      },
      [&](int step) { return pq.finished(step); });
}

void Partition::validate(int num_atoms) const {
  std::vector<int> all(d1);
  all.insert(all.end(), d2.begin(), d2.end());
  std::sort(all.begin(), all.end());
  std::vector<int> expect(static_cast<std::size_t>(num_atoms));
  std::iota(expect.begin(), expect.end(), 0);
  if (all != expect) usage_error("partition parts must be disjoint and cover all " + std::to_string(num_atoms) + " atoms");
  if (!std::is_sorted(d1.begin(), d1.end()) || !std::is_sorted(d2.begin(), d2.end()))
    usage_error("partition parts must be sorted");
}

CombinatorialSolution solve_combinatorial(const Dictionary& dict, const Partition& part, int p,
                                          const Eigen::VectorXd& y, const SolverConfig& cfg,
                                          const EnumerationLimits& limits) {
  cfg.validate();
  check_problem(dict, y);
  part.validate(dict.cols());
  const int m2 = static_cast<int>(part.d2.size());
  if (p < 0 || p > m2) usage_error("P must lie in [0, |D2|] (|D2| = " + std::to_string(m2) + ")");
  const std::uint64_t total = binomial(m2, p);
  if (total > limits.max_subsets)
    usage_error("C(" + std::to_string(m2) + ", " + std::to_string(p) + ") subproblems exceeds the enumeration cap");
  if (part.d1.empty() && p == 0) usage_error("combinatorial search needs a nonempty column set");

  struct Candidate {
    SparseSolution sol;
    std::vector<int> chosen;
    bool ok = false;
  };
  std::vector<Candidate> cands(static_cast<std::size_t>(total));
  const auto n_cands = static_cast<std::ptrdiff_t>(total);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t r = 0; r < n_cands; ++r) {
    auto& c = cands[static_cast<std::size_t>(r)];
    std::vector<int> pick(static_cast<std::size_t>(p));
    if (p > 0) unrank_combination(static_cast<std::uint64_t>(r), m2, pick);
    for (int& v : pick) v = part.d2[static_cast<std::size_t>(v)];
    std::vector<int> cols(part.d1);
    cols.insert(cols.end(), pick.begin(), pick.end());
    std::sort(cols.begin(), cols.end());
    try {
      const SparseSolution sub = solve_l1(dict.select(SubsetIndex(cols)), y, cfg);
      c.sol = sub;
      c.sol.coefficients = Eigen::VectorXd::Zero(dict.cols());
      for (std::size_t j = 0; j < cols.size(); ++j) c.sol.coefficients(cols[j]) = sub.coefficients(static_cast<Eigen::Index>(j));
      c.sol.support = support_of(c.sol.coefficients, cfg.support_tol);
      c.sol.residual_norm = (y - dict.atoms() * c.sol.coefficients).norm();
      c.chosen = std::move(pick);
      c.ok = true;
    } catch (const Error&) {
      c.ok = false;
    }
  }

  const double feasible_cut = cfg.feasibility_tol * y.norm();
  CombinatorialSolution out;
  out.subproblems = cands.size();
  const Candidate* best = nullptr;
  const Candidate* best_residual = nullptr;
  for (const auto& c : cands) {
    if (!c.ok) continue;
    if (!best_residual || c.sol.residual_norm < best_residual->sol.residual_norm) best_residual = &c;
    if (c.sol.residual_norm > feasible_cut) continue;
    ++out.feasible;
    if (!best) {
      best = &c;
      continue;
    }
    const auto cs = c.sol.support.size();
    const auto bs = best->sol.support.size();
    if (cs < bs || (cs == bs && c.sol.objective < best->sol.objective)) best = &c;
  }
  if (best) {
    out.solution = best->sol;
    out.winning_d2 = best->chosen;
  } else if (best_residual) {
    out.solution = best_residual->sol;
    out.solution.converged = false;
    out.winning_d2 = best_residual->chosen;
  } else {
    numerical_error("every combinatorial subproblem failed");
  }
  return out;
}

Partition rank_illness(const CoherencyGraph& graph, int m) {
  const int k = graph.num_nodes();
  if (m <= 0 || m >= k) usage_error("illness partition size m must lie in (0, K)");
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  const auto& counts = graph.membership_counts();
  const auto& sums = graph.membership_delta_sums();
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto ua = static_cast<std::size_t>(a);
    const auto ub = static_cast<std::size_t>(b);
    if (counts[ua] != counts[ub]) return counts[ua] > counts[ub];
    if (sums[ua] != sums[ub]) return sums[ua] > sums[ub];
    return a < b;
  });
  Partition part;
  part.d2.assign(order.begin(), order.begin() + m);
  part.d1.assign(order.begin() + m, order.end());
  std::sort(part.d1.begin(), part.d1.end());
  std::sort(part.d2.begin(), part.d2.end());
  return part;
}

ErrorProbability error_probability(int k, int s, int m2, int p) {
  if (k < 1 || s < 0 || s > k) usage_error("error probability needs 0 <= s <= K and K >= 1");
  if (m2 < 0 || m2 > k) usage_error("error probability needs 0 <= |D2| <= K");
  if (p < 0 || p > s) usage_error("error probability needs 0 <= P <= s");
  namespace mp = boost::multiprecision;
  auto choose = [](int n, int r) {
    mp::cpp_int c = 1;
    if (r < 0 || r > n) return mp::cpp_int(0);
    for (int i = 1; i <= r; ++i) {
      c *= n - r + i;
      c /= i;
    }
    return c;
  };
  const int m1 = k - m2;
  mp::cpp_int tail = 0;
  for (int i = p + 1; i <= s; ++i) tail += choose(m1, s - i) * choose(m2, i);
  const mp::cpp_int total = choose(k, s);

  ErrorProbability out;
  out.exact = (mp::cpp_bin_float_50(tail) / mp::cpp_bin_float_50(total)).convert_to<double>();

  const double sd = s;
  out.bound = (sd - p) * std::pow(sd / (k - sd + 1.0), p - 1) * std::pow(static_cast<double>(m2), p + 1) *
              sd * sd * sd / std::tgamma(p + 2.0);
  return out;
}

std::string solution_to_json(const SparseSolution& sol) {
  nlohmann::json j;
  j["coefficients"] = std::vector<double>(sol.coefficients.data(), sol.coefficients.data() + sol.coefficients.size());
  j["support"] = sol.support;
  j["residual_norm"] = sol.residual_norm;
  j["iterations"] = sol.iterations;
  j["converged"] = sol.converged;
  j["objective"] = sol.objective;
  return j.dump(2) + "\n";
}

}  // namespace coherency
