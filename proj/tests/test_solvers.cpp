#include "coherency/combinations.hpp"
#include "coherency/error.hpp"
#include "coherency/experiments.hpp"
#include "coherency/mcg.hpp"
#include "coherency/solvers.hpp"

#include "support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <algorithm>
#include <numeric>

using namespace coherency;

namespace {

Eigen::VectorXd sparse_vector(int k, const std::vector<int>& support, std::mt19937_64& rng) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(k);
  std::normal_distribution<double> normal;
  for (int i : support) x(i) = (rng() % 2 ? 1.0 : -1.0) * (0.5 + std::abs(normal(rng)));
  return x;
}

std::vector<int> random_support(int k, int s, std::mt19937_64& rng) {
  std::vector<int> all(static_cast<std::size_t>(k));
  std::iota(all.begin(), all.end(), 0);
  std::shuffle(all.begin(), all.end(), rng);
  std::vector<int> sup(all.begin(), all.begin() + s);
  std::sort(sup.begin(), sup.end());
  return sup;
}

Partition split(int k, std::vector<int> d2) {
  Partition p;
  p.d2 = std::move(d2);
  for (int i = 0; i < k; ++i)
    if (!std::binary_search(p.d2.begin(), p.d2.end(), i)) p.d1.push_back(i);
  return p;
}

}  // namespace

TEST_CASE("single atoms are recovered by every solver") {
  const auto d = gen_gaussian(20, 40, 3);
  const auto g = build_mcg(d, 2, 0.4);
  const auto part = rank_illness(g, 6);
  for (int i : {0, 7, 39}) {
    const Eigen::VectorXd y = d.atom(i);
    for (const auto& sol : {solve_l1(d, y), solve_irls(d, y), solve_mcg_irls(d, g, y),
                            solve_combinatorial(d, part, 4, y).solution}) {
      CHECK(sol.support == std::vector<int>{i});
      CHECK(sol.coefficients(i) == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(sol.converged);
    }
  }
}

TEST_CASE("zero observation") {
  const auto d = gen_gaussian(5, 8, 1);
  const auto sol = solve_irls(d, Eigen::VectorXd::Zero(5));
  CHECK(sol.coefficients == Eigen::VectorXd::Zero(8));
  CHECK(sol.iterations == 0);
  CHECK(sol.support.empty());
  CHECK(sol.converged);
  CHECK_THROWS_AS(solve_l1(d, Eigen::VectorXd::Zero(4)), Error);
}

TEST_CASE("l1 agrees with a brute-force sparsest-solution search on 2-sparse signals") {
  std::mt19937_64 rng(31);
  const auto d = testing::random_dictionary(10, 20, rng);
  // Nearly tied l1 minimizers converge slowly; one trial here needs ~300 iterations.
  SolverConfig cfg;
  cfg.max_iters = 2000;
  for (int trial = 0; trial < 25; ++trial) {
    const auto sup = random_support(20, 2, rng);
    const Eigen::VectorXd y = d.atoms() * sparse_vector(20, sup, rng);
    std::vector<int> p0;
    for (int a = 0; a < 20 && p0.empty(); ++a) {
      for (int b = a + 1; b < 20; ++b) {
        Eigen::MatrixXd sub(10, 2);
        sub << d.atom(a), d.atom(b);
        const Eigen::VectorXd c = sub.colPivHouseholderQr().solve(y);
        if ((sub * c - y).norm() < 1e-9 * y.norm()) {
          p0 = {a, b};
          break;
        }
      }
    }
    CHECK(p0 == sup);
    CHECK(solve_l1(d, y, cfg).support == p0);
  }
}

TEST_CASE("first iterate is the minimum-norm solution") {
  std::mt19937_64 rng(32);
  const auto d = testing::random_dictionary(8, 15, rng);
  const Eigen::VectorXd y = testing::random_vector(8, rng);
  SolverConfig cfg;
  cfg.max_iters = 1;
  const Eigen::MatrixXd pinv = d.atoms().completeOrthogonalDecomposition().pseudoInverse();
  const Eigen::VectorXd min_norm = pinv * y;
  for (const auto& sol : {solve_irls(d, y, cfg), solve_l1(d, y, cfg)}) {
    CHECK(sol.iterations == 1);
    CHECK((sol.coefficients - min_norm).norm() < 1e-10 * min_norm.norm());
  }
}

TEST_CASE("regularized update matches the direct K x K formula") {
  std::mt19937_64 rng(33);
  const auto d = testing::random_dictionary(8, 15, rng);
  const Eigen::VectorXd y = testing::random_vector(8, rng);
  const Eigen::MatrixXd a = d.atoms();
  SolverConfig cfg;
  cfg.noise_variance = 0.05;

  cfg.max_iters = 1;
  const Eigen::MatrixXd k1 = a.transpose() * a + 0.05 * Eigen::MatrixXd::Identity(15, 15);
  const Eigen::VectorXd x1 = k1.ldlt().solve(a.transpose() * y);
  CHECK((solve_irls(d, y, cfg).coefficients - x1).norm() < 1e-10 * x1.norm());

  cfg.max_iters = 2;
  const double damp = cfg.damping_init * x1.cwiseAbs2().maxCoeff();
  const Eigen::VectorXd w = (x1.array().square() + damp).inverse();
  const Eigen::MatrixXd k2 = a.transpose() * a + 0.05 * Eigen::MatrixXd(w.asDiagonal());
  const Eigen::VectorXd x2 = k2.ldlt().solve(a.transpose() * y);
  CHECK((solve_irls(d, y, cfg).coefficients - x2).norm() < 1e-8 * x2.norm());

  // Regularized solutions do not interpolate y.
  cfg.max_iters = 200;
  CHECK(solve_irls(d, y, cfg).residual_norm > 1e-6);
}

TEST_CASE("scale equivariance") {
  std::mt19937_64 rng(34);
  const auto d = gen_gaussian(15, 25, 7);
  const double scales[] = {-1.0, 2.5, 0.01, -300.0};
  for (int inst = 0; inst < 100; ++inst) {
    const auto sup = random_support(25, 1 + inst % 6, rng);
    const Eigen::VectorXd y = d.atoms() * sparse_vector(25, sup, rng);
    const double c = scales[inst % 4];
    for (int which = 0; which < 2; ++which) {
      const auto a = which ? solve_irls(d, y) : solve_l1(d, y);
      const auto b = which ? solve_irls(d, c * y) : solve_l1(d, c * y);
      CHECK(a.support == b.support);
      CHECK((b.coefficients - c * a.coefficients).norm() <= 1e-8 * std::abs(c) * a.coefficients.norm());
    }
  }
}

TEST_CASE("permutation equivariance") {
  std::mt19937_64 rng(35);
  const Eigen::MatrixXd raw = testing::random_matrix(12, 20, rng);
  const auto d = Dictionary::normalized(raw);
  const auto g = build_mcg(d, 2, 0.45);
  for (int inst = 0; inst < 100; ++inst) {
    std::vector<int> perm(20);  // column j of the permuted dictionary is column perm[j]
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> inv(20);
    for (int j = 0; j < 20; ++j) inv[perm[j]] = j;
    Eigen::MatrixXd praw(12, 20);
    for (int j = 0; j < 20; ++j) praw.col(j) = raw.col(perm[j]);
    const auto pd = Dictionary::normalized(praw);

    std::vector<IllSubset> ill;
    for (const auto& e : g.ill_subsets()) {
      std::vector<int> m{inv[e.indices[0]], inv[e.indices[1]]};
      std::sort(m.begin(), m.end());
      ill.push_back({SubsetIndex(m), e.delta});
    }
    std::sort(ill.begin(), ill.end(), [](const IllSubset& a, const IllSubset& b) { return a.indices < b.indices; });
    const CoherencyGraph pg(2, 0.45, 20, ill);

    const auto sup = random_support(20, 1 + inst % 5, rng);
    const Eigen::VectorXd y = d.atoms() * sparse_vector(20, sup, rng);
    const int which = inst % 3;
    const auto a = which == 0 ? solve_l1(d, y) : which == 1 ? solve_irls(d, y) : solve_mcg_irls(d, g, y);
    const auto b = which == 0 ? solve_l1(pd, y) : which == 1 ? solve_irls(pd, y) : solve_mcg_irls(pd, pg, y);
    Eigen::VectorXd back(20);
    for (int j = 0; j < 20; ++j) back(perm[j]) = b.coefficients(j);
    CHECK((back - a.coefficients).norm() <= 1e-8 * a.coefficients.norm());
  }
}

TEST_CASE("alternation objective never rises between damping updates") {
  std::mt19937_64 rng(36);
  SolverConfig cfg;
  cfg.record_trace = true;
  int checked = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const auto d = testing::random_dictionary(15, 25, rng);
    const auto sup = random_support(25, 2 + inst % 7, rng);
    const Eigen::VectorXd y = d.atoms() * sparse_vector(25, sup, rng);
    const auto sol = solve_irls(d, y, cfg);
    REQUIRE(sol.trace.size() == static_cast<std::size_t>(sol.iterations - 1));
    for (std::size_t l = 1; l < sol.trace.size(); ++l) {
      if (sol.trace[l].damping != sol.trace[l - 1].damping) continue;
      CHECK(sol.trace[l].objective <= sol.trace[l - 1].objective + 1e-9 * std::abs(sol.trace[l - 1].objective));
      ++checked;
    }
  }
  CHECK(checked > 1000);
}

TEST_CASE("converged noiseless solutions are feasible") {
  std::mt19937_64 rng(37);
  const auto d = gen_gaussian(15, 25, 2);
  const auto g = build_mcg(d, 3, 0.5);
  for (int inst = 0; inst < 40; ++inst) {
    const auto sup = random_support(25, 1 + inst % 8, rng);
    const Eigen::VectorXd y = d.atoms() * sparse_vector(25, sup, rng);
    for (const auto& sol : {solve_l1(d, y), solve_irls(d, y), solve_mcg_irls(d, g, y)}) {
      CHECK(std::abs(sol.residual_norm - (y - d.atoms() * sol.coefficients).norm()) < 1e-8);
      CHECK(sol.support == support_of(sol.coefficients, SolverConfig{}.support_tol));
      if (sol.converged) CHECK(sol.residual_norm <= 1e-6 * y.norm());
    }
  }
}

TEST_CASE("MCG-IRLS with an empty graph and pinned exponents is plain IRLS") {
  std::mt19937_64 rng(38);
  const auto d = gen_gaussian(15, 25, 4);
  const CoherencyGraph empty(2, 0.5, 25, {});
  SolverConfig pinned;
  pinned.pq = {0, 2.0, 2.0, 0.0, 0.0};
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd y = d.atoms() * sparse_vector(25, random_support(25, 3, rng), rng);
    const auto a = solve_irls(d, y, pinned);
    const auto b = solve_mcg_irls(d, empty, y, pinned);
    CHECK(a.support == b.support);
    CHECK(a.coefficients == b.coefficients);
    CHECK(a.iterations == b.iterations);
  }
  CHECK_THROWS_AS(solve_mcg_irls(d, CoherencyGraph(2, 0.5, 24, {}), d.atom(0)), Error);
}

TEST_CASE("exponent ramp") {
  const PqSchedule pq;
  CHECK(pq.p(0) == 0.0);
  CHECK(pq.q(0) == 2.0);
  CHECK(pq.p(10) == doctest::Approx(1.0));
  CHECK(pq.q(10) == doctest::Approx(1.0));
  CHECK(pq.p(20) == 2.0);
  CHECK(pq.q(25) == 0.0);
  CHECK_FALSE(pq.finished(19));
  CHECK(pq.finished(20));
}

TEST_CASE("neighbor aggregates") {
  const auto d = gen_gaussian(15, 25, 5);
  const auto g = build_mcg(d, 3, 0.5);
  SolverConfig rss;
  rss.neighbor_aggregate = NeighborAggregate::RootSumSquares;
  const Eigen::VectorXd y = d.atom(3) + 0.5 * d.atom(11);
  CHECK(solve_mcg_irls(d, g, y, rss).support == std::vector<int>{3, 11});
}

TEST_CASE("config validation") {
  auto bad = [](auto mutate) {
    SolverConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), Error);
  };
  bad([](SolverConfig& c) { c.max_iters = 0; });
  bad([](SolverConfig& c) { c.damping_init = 0; });
  bad([](SolverConfig& c) { c.damping_decay = 1; });
  bad([](SolverConfig& c) { c.damping_min = 1; });
  bad([](SolverConfig& c) { c.convergence_tol = -1; });
  bad([](SolverConfig& c) { c.support_tol = 0; });
  bad([](SolverConfig& c) { c.noise_variance = -0.1; });
  CHECK_NOTHROW(SolverConfig{}.validate());
}

TEST_CASE("combinatorial search") {
  const auto d = gen_gaussian(15, 25, 7);
  const auto part = rank_illness(build_mcg(d, 4, 0.4), 6);
  std::mt19937_64 rng(39);
  const Eigen::VectorXd y = d.atoms() * sparse_vector(25, random_support(25, 5, rng), rng);

  SUBCASE("C(6, 4) subproblems") { CHECK(solve_combinatorial(d, part, 4, y).subproblems == 15); }

  SUBCASE("P = |D2| is one l1 problem over the whole dictionary") {
    const auto c = solve_combinatorial(d, part, 6, y);
    const auto l1 = solve_l1(d, y);
    CHECK(c.subproblems == 1);
    CHECK(c.solution.coefficients == l1.coefficients);
    CHECK(c.winning_d2 == part.d2);
  }

  SUBCASE("truth with at most P ill atoms is recovered") {
    int exact = 0;
    for (int trial = 0; trial < 20; ++trial) {
      auto sup = random_support(19, 3, rng);
      for (int& i : sup) i = part.d1[i];
      std::vector<int> ill = random_support(6, 2, rng);
      for (int i : ill) sup.push_back(part.d2[i]);
      std::sort(sup.begin(), sup.end());
      const Eigen::VectorXd x = sparse_vector(25, sup, rng);
      const auto c = solve_combinatorial(d, part, 4, d.atoms() * x);
      exact += c.solution.support == sup;
      for (int i : c.winning_d2) CHECK(std::binary_search(part.d2.begin(), part.d2.end(), i));
    }
    CHECK(exact >= 19);
  }

  SUBCASE("no feasible candidate") {
    const Eigen::VectorXd noise = testing::random_vector(15, rng);
    std::vector<int> rest(24);
    std::iota(rest.begin(), rest.end(), 1);
    const auto c = solve_combinatorial(d, split(25, rest), 0, noise);  // only atom 0 is usable
    CHECK(c.feasible == 0);
    CHECK_FALSE(c.solution.converged);
    CHECK(c.solution.coefficients(1) == 0.0);
  }

  SUBCASE("argument checks") {
    CHECK_THROWS_AS(solve_combinatorial(d, part, 7, y), Error);
    Partition overlap = part;
    overlap.d1.push_back(part.d2[0]);
    std::sort(overlap.d1.begin(), overlap.d1.end());
    CHECK_THROWS_AS(solve_combinatorial(d, overlap, 2, y), Error);
    CHECK_THROWS_AS(solve_combinatorial(d, split(25, {0, 1, 2, 3, 4, 5}), 4, y, {}, {10}), Error);
  }
}

TEST_CASE("the winner is the sparsest feasible candidate") {
  // Atom 2 alone explains y; the other candidate needs two atoms.
  Eigen::MatrixXd raw(2, 3);
  raw << 1, 0, 1,  //
      0, 1, 1;
  const auto d = Dictionary::normalized(raw);
  const Eigen::VectorXd y = d.atom(2);
  const auto c = solve_combinatorial(d, split(3, {0, 1, 2}), 2, y);
  CHECK(c.subproblems == 3);
  CHECK(c.feasible == 3);
  CHECK(c.solution.support == std::vector<int>{2});
  CHECK(std::count(c.winning_d2.begin(), c.winning_d2.end(), 2) == 1);
}

TEST_CASE("illness ranking") {
  CHECK(rank_illness(CoherencyGraph(2, 0.5, 8, {}), 3).d2 == std::vector<int>{0, 1, 2});
  const CoherencyGraph one(3, 0.5, 12, {{SubsetIndex{3, 7, 9}, 0.6}});
  const auto p = rank_illness(one, 3);
  CHECK(p.d2 == std::vector<int>{3, 7, 9});
  CHECK(p.d1.size() == 9);
  // Equal counts: the larger summed delta wins.
  const CoherencyGraph tie(2, 0.5, 5, {{SubsetIndex{0, 1}, 0.6}, {SubsetIndex{2, 3}, 0.9}});
  CHECK(rank_illness(tie, 2).d2 == std::vector<int>{2, 3});

  const auto g = build_mcg(gen_gaussian(15, 25, 7), 4, 0.4);
  std::vector<int> order(25);
  std::iota(order.begin(), order.end(), 0);
  const auto counts = membership_histogram(g);
  const auto& sums = g.membership_delta_sums();
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return std::tuple(-counts[a], -sums[a], a) < std::tuple(-counts[b], -sums[b], b);
  });
  std::vector<int> top(order.begin(), order.begin() + 6);
  std::sort(top.begin(), top.end());
  CHECK(rank_illness(g, 6).d2 == top);
  CHECK_THROWS_AS(rank_illness(g, 0), Error);
  CHECK_THROWS_AS(rank_illness(g, 25), Error);
}

TEST_CASE("error probability") {
  CHECK(error_probability(20, 5, 6, 5).exact == 0.0);
  const auto paper = error_probability(200, 12, 20, 6);
  CHECK(paper.exact >= 2e-6);
  CHECK(paper.exact <= 5e-5);

  // Brute force over all C(20, 5) supports, with D2 = the first six atoms.
  std::vector<int> c(5);
  std::uint64_t bad = 0;
  for (std::uint64_t r = 0; r < binomial(20, 5); ++r) {
    unrank_combination(r, 20, c);
    bad += std::count_if(c.begin(), c.end(), [](int i) { return i < 6; }) > 2;
  }
  CHECK(error_probability(20, 5, 6, 2).exact == doctest::Approx(static_cast<double>(bad) / 15504.0).epsilon(1e-14));

  for (int p = 0; p < 12; ++p) CHECK(error_probability(200, 12, 20, p + 1).exact <= error_probability(200, 12, 20, p).exact);
  CHECK(error_probability(500, 40, 250, 0).exact > 0.0);  // large binomials stay finite

  // (s - P) (s / (K - s + 1))^(P - 1) m2^(P + 1) s^3 / (P + 1)!
  CHECK(error_probability(20, 5, 6, 2).bound == doctest::Approx(3.0 * (5.0 / 16.0) * 216.0 * 125.0 / 6.0));
  CHECK_THROWS_AS(error_probability(10, 11, 2, 0), Error);
  CHECK_THROWS_AS(error_probability(10, 5, 11, 0), Error);
  CHECK_THROWS_AS(error_probability(10, 5, 2, 6), Error);
}

TEST_CASE("solution JSON") {
  const auto d = gen_gaussian(6, 9, 1);
  const auto j = nlohmann::json::parse(solution_to_json(solve_irls(d, d.atom(4))));
  for (const char* key : {"coefficients", "support", "residual_norm", "iterations", "converged", "objective"})
    CHECK(j.contains(key));
  CHECK(j["coefficients"].size() == 9);
  CHECK(j["support"] == nlohmann::json::array({4}));
}
