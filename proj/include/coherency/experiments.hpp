#pragma once

#include "coherency/dictionary.hpp"
#include "coherency/mcg.hpp"
#include "coherency/solvers.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace coherency {

enum class SolverKind { L1, Irls, McgIrls, Combinatorial };

std::string_view solver_kind_name(SolverKind kind);
SolverKind parse_solver_kind(std::string_view name);

enum class SuccessCriterion { ExactSupport, RelativeError };

struct SuccessRule {
  SuccessCriterion criterion = SuccessCriterion::ExactSupport;
  double threshold = 1e-3;  // relative l2 error, used by RelativeError only
};

// Where the experiment dictionary comes from: a generator or a file.
struct DictionarySource {
  std::string kind = "gaussian";  // gaussian | odct | odct2d | file
  int n = 15;
  int k = 25;
  std::uint64_t seed = 1;
  int n1 = 3;
  int n2 = 3;
  int redundancy = 4;
  std::string path;
  bool normalize = true;

  Dictionary load() const;
};

struct SolverEntry {
  SolverKind kind = SolverKind::L1;
  std::string label;
  SolverConfig config;
};

struct McgParams {
  int order = 3;
  double threshold = 0.4;
  PruneConfig prune;
};

struct PartitionParams {
  int m = 6;
  int p = 4;
  // Graph used to rank illness; defaults to the solver graph parameters.
  std::optional<McgParams> graph;
};

struct TrialSpec {
  DictionarySource dictionary;
  std::vector<int> sparsity;
  int trials_per_s = 20000;
  std::uint64_t master_seed = 0;
  std::vector<SolverEntry> solvers;
  SuccessRule success;
  McgParams mcg;
  std::optional<PartitionParams> partition;
  std::vector<int> correlation_orders;
  double correlation_threshold = 0.4;
  EnumerationLimits limits;

  // Execution knobs; they never change the report.
  int threads = 0;
  bool keep_trials = false;
};

nlohmann::json solver_config_to_json(const SolverConfig& cfg);
// Missing fields keep their defaults; problems are appended to `errors`.
SolverConfig solver_config_from_json(const nlohmann::json& j, std::vector<std::string>& errors);

// Every problem with the spec, empty when it is runnable.
std::vector<std::string> validate_trial_spec(const TrialSpec& spec);

// Parses a spec, collecting every invalid field before throwing one usage error.
TrialSpec trial_spec_from_json(const nlohmann::json& j);
nlohmann::json trial_spec_to_json(const TrialSpec& spec);

struct SparsityStats {
  int sparsity = 0;
  int trials = 0;
  int successes = 0;
  int solver_errors = 0;
  double mean_iterations = 0.0;

  double rate() const { return trials > 0 ? static_cast<double>(successes) / trials : 0.0; }
  friend bool operator==(const SparsityStats&, const SparsityStats&) = default;
};

struct OrderCorrelation {
  int order = 0;
  std::optional<double> pearson;  // nullopt when either histogram has zero variance
  friend bool operator==(const OrderCorrelation&, const OrderCorrelation&) = default;
};

struct SolverReport {
  std::string label;
  SolverKind kind = SolverKind::L1;
  std::vector<SparsityStats> by_sparsity;
  // Per atom, over failed trials: true-support atoms missing from the estimate.
  std::vector<long> atom_errors;
  // Per atom, over failed trials: estimated-support atoms outside the true support.
  std::vector<long> atom_false_alarms;
  std::vector<OrderCorrelation> correlations;
  friend bool operator==(const SolverReport&, const SolverReport&) = default;
};

struct MembershipHistogram {
  int order = 0;
  std::size_t ill_subsets = 0;
  std::vector<int> counts;
  friend bool operator==(const MembershipHistogram&, const MembershipHistogram&) = default;
};

// One (solver, trial) outcome. Only kept when TrialSpec::keep_trials is set.
struct TrialRecord {
  int solver = 0;
  int sparsity = 0;
  int trial = 0;
  bool success = false;
  bool solver_error = false;
  int iterations = 0;
  std::vector<int> true_support;
  std::vector<int> estimated_support;
};

struct ExperimentReport {
  nlohmann::json spec;
  int n = 0;
  int k = 0;
  double mutual_coherence = 0.0;
  std::string success_criterion;
  std::size_t solver_graph_ill_subsets = 0;
  std::vector<int> partition_d2;
  std::vector<MembershipHistogram> memberships;
  std::vector<SolverReport> solvers;
  std::vector<TrialRecord> trials;  // not serialized

  friend bool operator==(const ExperimentReport& a, const ExperimentReport& b) {
    return a.spec == b.spec && a.n == b.n && a.k == b.k && a.mutual_coherence == b.mutual_coherence &&
           a.success_criterion == b.success_criterion && a.solver_graph_ill_subsets == b.solver_graph_ill_subsets &&
           a.partition_d2 == b.partition_d2 && a.memberships == b.memberships && a.solvers == b.solvers;
  }
};

struct SyntheticSignal {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  std::vector<int> support;  // sorted
};

// Uniform random s-support, N(0, 1) values redrawn until |v| >= 0.1, y = D x.
SyntheticSignal synth_signal(const Dictionary& dict, int s, std::uint64_t trial_seed);

// Seed of trial `trial` at sparsity s, mixed from the master seed.
std::uint64_t trial_seed(std::uint64_t master_seed, int s, int trial);

ExperimentReport run_recovery_sweep(const TrialSpec& spec);

std::optional<double> pearson_correlation(std::span<const double> a, std::span<const double> b);

// Exhaustive MCG per order at threshold t, correlated against error_counts.
std::vector<OrderCorrelation> membership_error_correlation(const Dictionary& dict, std::span<const long> error_counts,
                                                           std::span<const int> orders, double t,
                                                           const EnumerationLimits& limits = {});

struct IterationPoint {
  int sparsity = 0;
  double mean_iterations = 0.0;
};
struct IterationProfile {
  std::string label;
  std::vector<IterationPoint> points;
};
std::vector<IterationProfile> iteration_profile(const ExperimentReport& report);

nlohmann::json report_to_json(const ExperimentReport& report);
ExperimentReport report_from_json(const nlohmann::json& j);

// report.json, success_rates.csv, atom_errors.csv, iterations.csv,
// correlations.csv and plot_report.py under dir.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace coherency
