#include "coherency/error.hpp"
#include "coherency/experiments.hpp"
#include "coherency/text_io.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

using namespace coherency;
using nlohmann::json;

namespace {

TrialSpec small_spec() {
  TrialSpec spec;
  spec.dictionary = {"gaussian", 15, 25, 7};
  spec.sparsity = {1, 3, 5};
  spec.trials_per_s = 40;
  spec.master_seed = 99;
  spec.solvers = {{SolverKind::L1, "l1", {}}, {SolverKind::Irls, "irls", {}}, {SolverKind::McgIrls, "mcg-irls", {}}};
  spec.mcg = {3, 0.5, {}};
  spec.correlation_orders = {2, 3};
  return spec;
}

int count_lines(const std::string& text) { return static_cast<int>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST_CASE("synthetic signals") {
  const auto d = gen_gaussian(15, 25, 1);
  const auto one = synth_signal(d, 1, 5);
  REQUIRE(one.support.size() == 1);
  CHECK((one.y - one.x(one.support[0]) * d.atom(one.support[0])).norm() < 1e-15);

  const auto a = synth_signal(d, 6, 77);
  const auto b = synth_signal(d, 6, 77);
  CHECK(a.support == b.support);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(std::is_sorted(a.support.begin(), a.support.end()));
  CHECK(a.support.size() == 6);
  CHECK((a.y - d.atoms() * a.x).norm() == 0.0);
  for (int i = 0; i < 25; ++i) {
    const bool on = std::binary_search(a.support.begin(), a.support.end(), i);
    CHECK((a.x(i) != 0.0) == on);
    if (on) CHECK(std::abs(a.x(i)) >= 0.1);
  }
  CHECK_THROWS_AS(synth_signal(d, 0, 1), Error);
  CHECK_THROWS_AS(synth_signal(d, 16, 1), Error);
}

TEST_CASE("synthetic supports are uniform (chi-square)") {
  const auto d = gen_gaussian(15, 25, 1);
  std::vector<double> counts(25, 0.0);
  const int draws = 100000;
  for (int t = 0; t < draws; ++t)
    for (int i : synth_signal(d, 3, trial_seed(5, 3, t)).support) counts[i] += 1.0;
  const double expect = 3.0 * draws / 25.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi2 < 42.98);  // 99th percentile of chi-square with 24 degrees of freedom
}

TEST_CASE("trial seeds separate master seed, sparsity and trial") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t m : {0ULL, 1ULL, 2ULL})
    for (int s = 1; s <= 10; ++s)
      for (int t = 0; t < 100; ++t) seen.insert(trial_seed(m, s, t));
  CHECK(seen.size() == 3000);
  CHECK(trial_seed(1, 2, 3) == trial_seed(1, 2, 3));
}

TEST_CASE("pearson correlation") {
  const std::vector<double> a{0, 1};
  CHECK(*pearson_correlation(a, a) == doctest::Approx(1.0));
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{8, 6, 4, 2};
  CHECK(*pearson_correlation(x, y) == doctest::Approx(-1.0));
  const std::vector<double> c{3, 3, 3, 3};
  CHECK_FALSE(pearson_correlation(x, c).has_value());
  const std::vector<double> u{1, 2, 3, 5};
  const std::vector<double> v{2, 1, 4, 3};
  // Hand computation: means 2.75 and 2.5; sxy = 3.5, sxx = 8.75, syy = 5.
  CHECK(*pearson_correlation(u, v) == doctest::Approx(3.5 / std::sqrt(8.75 * 5.0)));
  CHECK_THROWS_AS(pearson_correlation(x, a), Error);
}

TEST_CASE("membership correlation degenerate cases") {
  const auto d = gen_gaussian(15, 25, 7);
  const auto g = build_mcg(d, 3, 0.4);
  const std::vector<long> same(g.membership_counts().begin(), g.membership_counts().end());
  const std::vector<int> orders{3};
  const auto r = membership_error_correlation(d, same, orders, 0.4);
  REQUIRE(r.size() == 1);
  CHECK(*r[0].pearson == doctest::Approx(1.0));
  const std::vector<long> flat(25, 4);
  CHECK_FALSE(membership_error_correlation(d, flat, orders, 0.4)[0].pearson.has_value());
  CHECK_THROWS_AS(membership_error_correlation(d, std::vector<long>(3, 1), orders, 0.4), Error);
}

TEST_CASE("sweep is deterministic and independent of the thread count") {
  auto spec = small_spec();
  spec.threads = 1;
  const auto a = run_recovery_sweep(spec);
  spec.threads = 3;
  const auto b = run_recovery_sweep(spec);
  CHECK(a == b);
  CHECK(report_to_json(a).dump(2) == report_to_json(b).dump(2));
  CHECK(report_to_json(a)["spec"].contains("threads") == false);
}

TEST_CASE("sweep statistics replay from per-trial logs") {
  auto spec = small_spec();
  spec.keep_trials = true;
  spec.sparsity = {2, 4, 6, 8};
  const auto r = run_recovery_sweep(spec);
  REQUIRE(r.trials.size() == 3 * 4 * 40);
  for (std::size_t v = 0; v < r.solvers.size(); ++v) {
    const auto& sr = r.solvers[v];
    std::vector<long> misses(25, 0);
    std::vector<long> alarms(25, 0);
    for (const auto& st : sr.by_sparsity) {
      CHECK(st.successes <= st.trials);
      long iters = 0;
      int n = 0;
      int ok = 0;
      for (const auto& t : r.trials) {
        if (t.solver != static_cast<int>(v) || t.sparsity != st.sparsity) continue;
        ok += t.success;
        if (!t.solver_error) {
          iters += t.iterations;
          ++n;
        }
        if (t.success) continue;
        for (int i : t.true_support)
          if (!std::binary_search(t.estimated_support.begin(), t.estimated_support.end(), i)) ++misses[i];
        for (int i : t.estimated_support)
          if (!std::binary_search(t.true_support.begin(), t.true_support.end(), i)) ++alarms[i];
      }
      CHECK(ok == st.successes);
      CHECK(st.mean_iterations == doctest::Approx(static_cast<double>(iters) / n));
    }
    CHECK(sr.atom_errors == misses);
    CHECK(sr.atom_false_alarms == alarms);
  }
  const auto profile = iteration_profile(r);
  REQUIRE(profile.size() == 3);
  for (std::size_t v = 0; v < 3; ++v) {
    CHECK(profile[v].label == r.solvers[v].label);
    for (std::size_t i = 0; i < 4; ++i) CHECK(profile[v].points[i].mean_iterations == r.solvers[v].by_sparsity[i].mean_iterations);
  }
}

TEST_CASE("sweep sanity: perfect at s = 1, no significant rise with s") {
  auto spec = small_spec();
  spec.sparsity = {1, 2, 3, 4, 5, 6, 7};
  spec.trials_per_s = 100;
  const auto r = run_recovery_sweep(spec);
  CHECK(r.mutual_coherence < 0.99);
  for (const auto& sr : r.solvers) {
    CHECK(sr.by_sparsity[0].successes == 100);
    for (std::size_t i = 1; i < sr.by_sparsity.size(); ++i) {
      const double p0 = sr.by_sparsity[i - 1].rate();
      const double p1 = sr.by_sparsity[i].rate();
      const double se = std::sqrt((p0 * (1 - p0) + p1 * (1 - p1)) / 100.0);
      CHECK(p1 - p0 <= 3.0 * se + 1e-12);
    }
    CHECK(sr.correlations.size() == 2);
  }
  CHECK(r.memberships.size() == 2);
  CHECK(r.solver_graph_ill_subsets > 0);
}

TEST_CASE("relative-error criterion and solver errors") {
  auto spec = small_spec();
  spec.success = {SuccessCriterion::RelativeError, 1e-3};
  spec.solvers = {{SolverKind::Irls, "irls", {}}, {SolverKind::Combinatorial, "comb", {}}};
  // The combinatorial enumeration cap is hit on every trial; those trials count as failures.
  spec.partition = PartitionParams{6, 3, McgParams{2, 0.4, {true, std::nullopt}}};
  spec.limits.max_subsets = 19;
  spec.correlation_orders.clear();
  spec.sparsity = {1};
  const auto r = run_recovery_sweep(spec);
  CHECK(r.success_criterion == "relative-error");
  CHECK(r.solvers[0].by_sparsity[0].successes == 40);
  CHECK(r.solvers[1].by_sparsity[0].solver_errors == 40);
  CHECK(r.solvers[1].by_sparsity[0].successes == 0);
  CHECK(r.partition_d2.size() == 6);
}

TEST_CASE("spec parsing") {
  const json j = json::parse(R"({
    "dictionary": {"kind": "gaussian", "n": 15, "k": 25, "seed": 7},
    "sparsity": {"from": 2, "to": 5},
    "trials_per_s": 10,
    "master_seed": 3,
    "solvers": ["l1", {"name": "irls", "label": "irls-fast", "config": {"damping_init": 0.001}},
                {"name": "combinatorial"}],
    "partition": {"m": 6, "p": 4, "graph": {"order": 4, "threshold": 0.4}},
    "correlation": {"orders": [2, 3, 4], "threshold": 0.4},
    "threads": 2
  })");
  const auto spec = trial_spec_from_json(j);
  CHECK(spec.sparsity == std::vector<int>{2, 3, 4, 5});
  CHECK(spec.solvers.size() == 3);
  CHECK(spec.solvers[1].label == "irls-fast");
  CHECK(spec.solvers[1].config.damping_init == 0.001);
  CHECK(spec.solvers[2].kind == SolverKind::Combinatorial);
  CHECK(spec.partition->graph->order == 4);
  CHECK(spec.threads == 2);

  const json echo = trial_spec_to_json(spec);
  CHECK_FALSE(echo.contains("threads"));
  CHECK(trial_spec_to_json(trial_spec_from_json(echo)) == echo);
}

TEST_CASE("invalid specs report every problem at once") {
  const json j = json::parse(R"({
    "dictionary": {"kind": "banana"},
    "sparsity": [0, 3],
    "trials_per_s": 0,
    "solvers": ["l1", "magic", {"name": "mcg-irls", "config": {"damping_decay": 2}}],
    "mcg": {"order": 1},
    "bogus": true
  })");
  try {
    trial_spec_from_json(j);
    FAIL("spec accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Usage);
    const std::string msg = e.what();
    for (const char* part : {"dictionary.kind", "sparsity", "trials_per_s", "master_seed", "magic", "damping_decay",
                             "mcg.order", "bogus"})
      CHECK_MESSAGE(msg.find(part) != std::string::npos, part);
  }
  json ok = json::parse(R"({"dictionary": {"kind": "odct", "n": 4, "k": 8}, "sparsity": [1], "trials_per_s": 2,
                            "master_seed": 1, "solvers": ["combinatorial"]})");
  CHECK_THROWS_WITH_AS(trial_spec_from_json(ok), doctest::Contains("partition"), Error);
  ok["partition"] = {{"m", 3}, {"p", 1}};
  CHECK_NOTHROW(trial_spec_from_json(ok));
  auto spec = small_spec();
  spec.sparsity = {16};
  CHECK_THROWS_AS(run_recovery_sweep(spec), Error);
}

TEST_CASE("report round trip and files") {
  auto spec = small_spec();
  spec.solvers[0].label = "l1, \"quoted\"";
  const auto r = run_recovery_sweep(spec);
  CHECK(report_from_json(report_to_json(r)) == r);
  CHECK(report_from_json(json::parse(report_to_json(r).dump(2))) == r);

  const auto dir = testing::scratch_dir("report");
  write_report(r, dir);
  for (const char* f : {"report.json", "success_rates.csv", "atom_errors.csv", "iterations.csv", "correlations.csv",
                        "plot_report.py"}) {
    CHECK(std::filesystem::exists(dir / f));
    CHECK_FALSE(std::filesystem::exists(dir / (std::string(f) + ".tmp")));
  }
  const auto rates = read_text_file(dir / "success_rates.csv");
  CHECK(rates.rfind("solver,sparsity,trials,successes,rate\n", 0) == 0);
  CHECK(count_lines(rates) == 1 + 3 * 3);
  CHECK(rates.find("\"l1, \"\"quoted\"\"\",1,40,40,1\n") != std::string::npos);
  CHECK(count_lines(read_text_file(dir / "iterations.csv")) == 1 + 3 * 3);
  const auto atoms = read_text_file(dir / "atom_errors.csv");
  CHECK(atoms.rfind("solver,atom,error_count,false_alarm_count,membership_order2,membership_order3\n", 0) == 0);
  CHECK(count_lines(atoms) == 1 + 3 * 25);
  CHECK(count_lines(read_text_file(dir / "correlations.csv")) == 1 + 3 * 2);
  CHECK(report_from_json(json::parse(read_text_file(dir / "report.json"))) == r);

  const auto empty_dir = testing::scratch_dir("report_empty");
  write_report(ExperimentReport{}, empty_dir);
  CHECK(read_text_file(empty_dir / "success_rates.csv") == "solver,sparsity,trials,successes,rate\n");
  CHECK(count_lines(read_text_file(empty_dir / "atom_errors.csv")) == 1);

  write_text_file_atomic(empty_dir / "blocker", "x");
  try {
    write_report(r, empty_dir / "blocker" / "sub");
    FAIL("wrote under a regular file");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
    CHECK(std::string(e.what()).find("blocker") != std::string::npos);
  }
}
