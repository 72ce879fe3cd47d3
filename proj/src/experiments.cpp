#include "coherency/experiments.hpp"

#include "coherency/error.hpp"
#include "coherency/text_io.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace coherency {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string_view criterion_name(SuccessCriterion c) {
  return c == SuccessCriterion::ExactSupport ? "exact-support" : "relative-error";
}

std::string_view aggregate_name(NeighborAggregate a) {
  return a == NeighborAggregate::MaxAbs ? "max-abs" : "root-sum-squares";
}

// Reads optional fields of a JSON object, recording type errors instead of throwing.
class FieldReader {
 public:
  FieldReader(const json& obj, std::string prefix, std::vector<std::string>& errors)
      : obj_(obj), prefix_(std::move(prefix)), errors_(errors) {
    if (!obj_.is_object()) errors_.push_back(where("") + "must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!obj_.is_object() || !obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      errors_.push_back(where(key) + "has the wrong type");
    }
  }

  bool has(const char* key) const { return obj_.is_object() && obj_.contains(key); }
  const json& at(const char* key) const { return obj_.at(key); }

  void reject_unknown(std::initializer_list<std::string_view> known) {
    if (!obj_.is_object()) return;
    for (const auto& [key, value] : obj_.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) errors_.push_back(where(key) + "is not a known field");
    }
  }

  std::string where(std::string_view key) const {
    std::string w = prefix_;
    if (!key.empty()) w += (w.empty() ? "" : ".") + std::string(key);
    return w.empty() ? "spec: " : w + ": ";
  }

 private:
  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& errors_;
};

json mcg_params_to_json(const McgParams& p) {
  json j = {{"order", p.order}, {"threshold", p.threshold}, {"prune", p.prune.enabled}};
  if (p.prune.pair_threshold) j["pair_threshold"] = *p.prune.pair_threshold;
  return j;
}

McgParams mcg_params_from_json(const json& j, const std::string& prefix, std::vector<std::string>& errors) {
  McgParams p;
  FieldReader r(j, prefix, errors);
  r.reject_unknown({"order", "threshold", "prune", "pair_threshold"});
  r.get("order", p.order);
  r.get("threshold", p.threshold);
  r.get("prune", p.prune.enabled);
  if (r.has("pair_threshold")) {
    double t = 0.0;
    r.get("pair_threshold", t);
    p.prune.pair_threshold = t;
  }
  return p;
}

struct Outcome {
  bool success = false;
  bool error = false;
  int iterations = 0;
  std::vector<int> estimated;
};

struct SweepContext {
  const Dictionary& dict;
  const CoherencyGraph* graph = nullptr;
  const Partition* partition = nullptr;
  int p = 0;
  SuccessRule success;
  EnumerationLimits limits;
};

Outcome run_one(const SweepContext& ctx, const SolverEntry& entry, const SyntheticSignal& sig) {
  Outcome out;
  try {
    SparseSolution sol;
    switch (entry.kind) {
      case SolverKind::L1: sol = solve_l1(ctx.dict, sig.y, entry.config); break;
      case SolverKind::Irls: sol = solve_irls(ctx.dict, sig.y, entry.config); break;
      case SolverKind::McgIrls: sol = solve_mcg_irls(ctx.dict, *ctx.graph, sig.y, entry.config); break;
      case SolverKind::Combinatorial:
        sol = solve_combinatorial(ctx.dict, *ctx.partition, ctx.p, sig.y, entry.config, ctx.limits).solution;
        break;
    }
    out.iterations = sol.iterations;
    out.estimated = sol.support;
    if (ctx.success.criterion == SuccessCriterion::ExactSupport) {
      out.success = sol.support == sig.support;
    } else {
      out.success = (sol.coefficients - sig.x).norm() / sig.x.norm() < ctx.success.threshold;
    }
  } catch (const Error&) {
    out.error = true;
  }
  return out;
}

std::string csv_field(std::string_view v) {
  if (v.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(v);
  std::string q = "\"";
  for (char c : v) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

constexpr const char* kPlotScript = R"PY(#!/usr/bin/env python3
"""Charts for a recovery sweep: success vs sparsity, iterations, per-atom errors."""
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(sys.argv[0]))


def rows(name):
    with open(os.path.join(here, name), newline="") as f:
        return list(csv.DictReader(f))


def by_solver(records, y):
    series = {}
    for r in records:
        series.setdefault(r["solver"], ([], []))
        series[r["solver"]][0].append(int(r["sparsity"]))
        series[r["solver"]][1].append(float(r[y]))
    return series


for name, column, ylabel, out in [
    ("success_rates.csv", "rate", "probability of recovery", "success_rates.png"),
    ("iterations.csv", "mean_iterations", "mean iterations", "iterations.png"),
]:
    records = rows(name)
    if not records:
        continue
    plt.figure()
    for solver, (xs, ys) in by_solver(records, column).items():
        plt.plot(xs, ys, marker="o", label=solver)
    plt.xlabel("sparsity")
    plt.ylabel(ylabel)
    plt.legend()
    plt.grid(True)
    plt.savefig(os.path.join(here, out), dpi=120)

errors = rows("atom_errors.csv")
if errors:
    membership_cols = [c for c in errors[0] if c.startswith("membership_order")]
    for solver in sorted({r["solver"] for r in errors}):
        sub = [r for r in errors if r["solver"] == solver]
        atoms = [int(r["atom"]) for r in sub]
        fig, axes = plt.subplots(1 + len(membership_cols), 1, sharex=True, squeeze=False)
        axes[0][0].bar(atoms, [float(r["error_count"]) for r in sub])
        axes[0][0].set_ylabel("errors")
        for ax, col in zip(axes[1:], membership_cols):
            ax[0].bar(atoms, [float(r[col]) for r in sub], color="gray")
            ax[0].set_ylabel(col.replace("membership_", ""))
        axes[-1][0].set_xlabel("atom")
        fig.savefig(os.path.join(here, "atom_errors_%s.png" % solver), dpi=120)
)PY";

}  // namespace

std::string_view solver_kind_name(SolverKind kind) {
  switch (kind) {
    case SolverKind::L1: return "l1";
    case SolverKind::Irls: return "irls";
    case SolverKind::McgIrls: return "mcg-irls";
    case SolverKind::Combinatorial: return "combinatorial";
  }
  return "?";
}

SolverKind parse_solver_kind(std::string_view name) {
  if (name == "l1") return SolverKind::L1;
  if (name == "irls") return SolverKind::Irls;
  if (name == "mcg-irls") return SolverKind::McgIrls;
  if (name == "combinatorial") return SolverKind::Combinatorial;
  usage_error("unknown solver '" + std::string(name) + "' (expected l1, irls, mcg-irls or combinatorial)");
}

Dictionary DictionarySource::load() const {
  if (kind == "gaussian") return gen_gaussian(n, k, seed);
  if (kind == "odct") return gen_odct(n, k);
  if (kind == "odct2d") return gen_odct2d(n1, n2, redundancy);
  if (kind == "file") return read_dictionary(path, normalize);
  usage_error("unknown dictionary kind '" + kind + "'");
}

json solver_config_to_json(const SolverConfig& c) {
  return {{"max_iters", c.max_iters},
          {"damping_init", c.damping_init},
          {"damping_decay", c.damping_decay},
          {"damping_step_tol", c.damping_step_tol},
          {"damping_min", c.damping_min},
          {"convergence_tol", c.convergence_tol},
          {"support_tol", c.support_tol},
          {"noise_variance", c.noise_variance},
          {"ramp_iters", c.pq.ramp_iters},
          {"p_start", c.pq.p_start},
          {"p_end", c.pq.p_end},
          {"q_start", c.pq.q_start},
          {"q_end", c.pq.q_end},
          {"neighbor_aggregate", aggregate_name(c.neighbor_aggregate)},
          {"feasibility_tol", c.feasibility_tol}};
}

SolverConfig solver_config_from_json(const json& j, std::vector<std::string>& errors) {
  SolverConfig c;
  FieldReader r(j, "config", errors);
  r.reject_unknown({"max_iters", "damping_init", "damping_decay", "damping_step_tol", "damping_min",
                    "convergence_tol", "support_tol", "noise_variance", "ramp_iters", "p_start", "p_end",
                    "q_start", "q_end", "neighbor_aggregate", "feasibility_tol"});
  r.get("max_iters", c.max_iters);
  r.get("damping_init", c.damping_init);
  r.get("damping_decay", c.damping_decay);
  r.get("damping_step_tol", c.damping_step_tol);
  r.get("damping_min", c.damping_min);
  r.get("convergence_tol", c.convergence_tol);
  r.get("support_tol", c.support_tol);
  r.get("noise_variance", c.noise_variance);
  r.get("ramp_iters", c.pq.ramp_iters);
  r.get("p_start", c.pq.p_start);
  r.get("p_end", c.pq.p_end);
  r.get("q_start", c.pq.q_start);
  r.get("q_end", c.pq.q_end);
  r.get("feasibility_tol", c.feasibility_tol);
  std::string agg = "max-abs";
  r.get("neighbor_aggregate", agg);
  if (agg == "max-abs") {
    c.neighbor_aggregate = NeighborAggregate::MaxAbs;
  } else if (agg == "root-sum-squares") {
    c.neighbor_aggregate = NeighborAggregate::RootSumSquares;
  } else {
    errors.push_back("config.neighbor_aggregate: expected max-abs or root-sum-squares");
  }
  try {
    c.validate();
  } catch (const Error& e) {
    errors.push_back(std::string("config: ") + e.what());
  }
  return c;
}

std::vector<std::string> validate_trial_spec(const TrialSpec& spec) {
  std::vector<std::string> errors;
  if (spec.sparsity.empty()) errors.push_back("sparsity: at least one value is required");
  for (int s : spec.sparsity)
    if (s < 1) errors.push_back("sparsity: values must be at least 1 (got " + std::to_string(s) + ")");
  if (spec.trials_per_s < 1) errors.push_back("trials_per_s: must be at least 1");
  if (spec.solvers.empty()) errors.push_back("solvers: at least one solver is required");
  bool needs_graph = false;
  bool needs_partition = false;
  for (const auto& s : spec.solvers) {
    needs_graph |= s.kind == SolverKind::McgIrls;
    needs_partition |= s.kind == SolverKind::Combinatorial;
    try {
      s.config.validate();
    } catch (const Error& e) {
      errors.push_back("solvers." + s.label + ": " + e.what());
    }
  }
  for (std::size_t a = 0; a < spec.solvers.size(); ++a)
    for (std::size_t b = a + 1; b < spec.solvers.size(); ++b)
      if (spec.solvers[a].label == spec.solvers[b].label)
        errors.push_back("solvers: duplicate label '" + spec.solvers[a].label + "'");
  auto check_mcg = [&](const McgParams& p, const std::string& where) {
    if (p.order < 2) errors.push_back(where + ".order: must be at least 2");
    if (!(p.threshold > 0.0 && p.threshold < 1.0)) errors.push_back(where + ".threshold: must lie in (0, 1)");
  };
  if (needs_graph) check_mcg(spec.mcg, "mcg");
  if (needs_partition) {
    if (!spec.partition) {
      errors.push_back("partition: required when the combinatorial solver is listed");
    } else {
      if (spec.partition->m < 1) errors.push_back("partition.m: must be at least 1");
      if (spec.partition->p < 0 || spec.partition->p > spec.partition->m)
        errors.push_back("partition.p: must lie in [0, m]");
      check_mcg(spec.partition->graph.value_or(spec.mcg), "partition.graph");
    }
  }
  for (int o : spec.correlation_orders)
    if (o < 2) errors.push_back("correlation.orders: values must be at least 2");
  if (!(spec.correlation_threshold > 0.0 && spec.correlation_threshold < 1.0))
    errors.push_back("correlation.threshold: must lie in (0, 1)");
  if (spec.success.criterion == SuccessCriterion::RelativeError && !(spec.success.threshold > 0.0))
    errors.push_back("success.threshold: must be positive");
  if (spec.threads < 0) errors.push_back("threads: must be nonnegative");
  return errors;
}

TrialSpec trial_spec_from_json(const json& j) {
  std::vector<std::string> errors;
  TrialSpec spec;
  FieldReader r(j, "", errors);
  r.reject_unknown({"dictionary", "sparsity", "trials_per_s", "master_seed", "solvers", "success", "mcg", "partition",
                    "correlation", "max_subsets", "threads"});

  if (r.has("dictionary")) {
    FieldReader d(r.at("dictionary"), "dictionary", errors);
    d.reject_unknown({"kind", "n", "k", "seed", "n1", "n2", "redundancy", "path", "normalize"});
    d.get("kind", spec.dictionary.kind);
    d.get("n", spec.dictionary.n);
    d.get("k", spec.dictionary.k);
    d.get("seed", spec.dictionary.seed);
    d.get("n1", spec.dictionary.n1);
    d.get("n2", spec.dictionary.n2);
    d.get("redundancy", spec.dictionary.redundancy);
    d.get("path", spec.dictionary.path);
    d.get("normalize", spec.dictionary.normalize);
    const auto& kind = spec.dictionary.kind;
    if (kind != "gaussian" && kind != "odct" && kind != "odct2d" && kind != "file")
      errors.push_back("dictionary.kind: expected gaussian, odct, odct2d or file");
    if (kind == "file" && spec.dictionary.path.empty()) errors.push_back("dictionary.path: required for kind file");
  } else {
    errors.push_back("dictionary: required");
  }

  if (r.has("sparsity")) {
    const json& s = r.at("sparsity");
    if (s.is_object()) {
      int from = 0;
      int to = -1;
      FieldReader sr(s, "sparsity", errors);
      sr.reject_unknown({"from", "to"});
      sr.get("from", from);
      sr.get("to", to);
      for (int v = from; v <= to; ++v) spec.sparsity.push_back(v);
    } else {
      r.get("sparsity", spec.sparsity);
    }
  }
  r.get("trials_per_s", spec.trials_per_s);
  if (r.has("master_seed")) {
    r.get("master_seed", spec.master_seed);
  } else {
    errors.push_back("master_seed: required so every run is reproducible");
  }

  if (r.has("solvers") && r.at("solvers").is_array()) {
    for (const auto& item : r.at("solvers")) {
      SolverEntry e;
      std::string name;
      if (item.is_string()) {
        name = item.get<std::string>();
      } else {
        FieldReader sr(item, "solvers[]", errors);
        sr.reject_unknown({"name", "label", "config"});
        sr.get("name", name);
        sr.get("label", e.label);
        if (sr.has("config")) e.config = solver_config_from_json(sr.at("config"), errors);
      }
      try {
        e.kind = parse_solver_kind(name);
      } catch (const Error& ex) {
        errors.push_back(std::string("solvers: ") + ex.what());
        e.label = name;
      }
      if (e.label.empty()) e.label = std::string(solver_kind_name(e.kind));
      spec.solvers.push_back(std::move(e));
    }
  } else {
    errors.push_back("solvers: required array");
  }

  if (r.has("success")) {
    FieldReader sr(r.at("success"), "success", errors);
    sr.reject_unknown({"criterion", "threshold"});
    std::string crit = "exact-support";
    sr.get("criterion", crit);
    sr.get("threshold", spec.success.threshold);
    if (crit == "exact-support") {
      spec.success.criterion = SuccessCriterion::ExactSupport;
    } else if (crit == "relative-error") {
      spec.success.criterion = SuccessCriterion::RelativeError;
    } else {
      errors.push_back("success.criterion: expected exact-support or relative-error");
    }
  }
  if (r.has("mcg")) spec.mcg = mcg_params_from_json(r.at("mcg"), "mcg", errors);
  if (r.has("partition")) {
    PartitionParams pp;
    FieldReader pr(r.at("partition"), "partition", errors);
    pr.reject_unknown({"m", "p", "graph"});
    pr.get("m", pp.m);
    pr.get("p", pp.p);
    if (pr.has("graph")) pp.graph = mcg_params_from_json(pr.at("graph"), "partition.graph", errors);
    spec.partition = pp;
  }
  if (r.has("correlation")) {
    FieldReader cr(r.at("correlation"), "correlation", errors);
    cr.reject_unknown({"orders", "threshold"});
    cr.get("orders", spec.correlation_orders);
    cr.get("threshold", spec.correlation_threshold);
  }
  r.get("max_subsets", spec.limits.max_subsets);
  r.get("threads", spec.threads);

  for (auto& e : validate_trial_spec(spec))
    if (std::find(errors.begin(), errors.end(), e) == errors.end()) errors.push_back(std::move(e));
  if (!errors.empty()) {
    std::string msg = "invalid experiment spec:";
    for (const auto& e : errors) msg += "\n  " + e;
    usage_error(msg);
  }
  return spec;
}

json trial_spec_to_json(const TrialSpec& spec) {
  json dict = {{"kind", spec.dictionary.kind}};
  const auto& d = spec.dictionary;
  if (d.kind == "gaussian") {
    dict.update({{"n", d.n}, {"k", d.k}, {"seed", d.seed}});
  } else if (d.kind == "odct") {
    dict.update({{"n", d.n}, {"k", d.k}});
  } else if (d.kind == "odct2d") {
    dict.update({{"n1", d.n1}, {"n2", d.n2}, {"redundancy", d.redundancy}});
  } else {
    dict.update({{"path", d.path}, {"normalize", d.normalize}});
  }
  json solvers = json::array();
  for (const auto& s : spec.solvers)
    solvers.push_back({{"name", solver_kind_name(s.kind)}, {"label", s.label}, {"config", solver_config_to_json(s.config)}});
  json success = {{"criterion", criterion_name(spec.success.criterion)}};
  if (spec.success.criterion == SuccessCriterion::RelativeError) success["threshold"] = spec.success.threshold;
  json j = {{"dictionary", std::move(dict)},
            {"sparsity", spec.sparsity},
            {"trials_per_s", spec.trials_per_s},
            {"master_seed", spec.master_seed},
            {"solvers", std::move(solvers)},
            {"success", std::move(success)},
            {"mcg", mcg_params_to_json(spec.mcg)},
            {"correlation", {{"orders", spec.correlation_orders}, {"threshold", spec.correlation_threshold}}},
            {"max_subsets", spec.limits.max_subsets}};
  if (spec.partition) {
    json p = {{"m", spec.partition->m}, {"p", spec.partition->p}};
    if (spec.partition->graph) p["graph"] = mcg_params_to_json(*spec.partition->graph);
    j["partition"] = std::move(p);
  }
  return j;
}

std::uint64_t trial_seed(std::uint64_t master_seed, int s, int trial) {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(s)));
  return splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::uint32_t>(trial)));
}

SyntheticSignal synth_signal(const Dictionary& dict, int s, std::uint64_t seed) {
  if (s < 1 || s > dict.rows() || s > dict.cols())
    usage_error("sparsity " + std::to_string(s) + " must lie in [1, min(N, K)]");
  std::mt19937_64 rng(seed);
  std::vector<int> atoms(static_cast<std::size_t>(dict.cols()));
  std::iota(atoms.begin(), atoms.end(), 0);
  SyntheticSignal sig;
  std::sample(atoms.begin(), atoms.end(), std::back_inserter(sig.support), s, rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  sig.x = Eigen::VectorXd::Zero(dict.cols());
  for (int i : sig.support) {
    double v = 0.0;
    do {
      v = normal(rng);
    } while (std::abs(v) < 0.1);
    sig.x(i) = v;
  }
  sig.y = dict.atoms() * sig.x;
  return sig;
}

std::optional<double> pearson_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) usage_error("correlation inputs differ in length");
  const auto n = static_cast<double>(a.size());
  if (a.size() < 2) return std::nullopt;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

namespace {

template <class A, class B>
std::optional<double> correlate(const std::vector<A>& a, const std::vector<B>& b) {
  std::vector<double> da(a.begin(), a.end());
  std::vector<double> db(b.begin(), b.end());
  return pearson_correlation(da, db);
}

}  // namespace

std::vector<OrderCorrelation> membership_error_correlation(const Dictionary& dict, std::span<const long> error_counts,
                                                           std::span<const int> orders, double t,
                                                           const EnumerationLimits& limits) {
  if (static_cast<int>(error_counts.size()) != dict.cols()) usage_error("error histogram length differs from K");
  std::vector<OrderCorrelation> out;
  const std::vector<long> errors(error_counts.begin(), error_counts.end());
  for (int order : orders) {
    const auto graph = build_mcg(dict, order, t, {}, limits);
    out.push_back({order, correlate(graph.membership_counts(), errors)});
  }
  return out;
}

ExperimentReport run_recovery_sweep(const TrialSpec& spec) {
  if (auto errors = validate_trial_spec(spec); !errors.empty()) {
    std::string msg = "invalid experiment spec:";
    for (const auto& e : errors) msg += "\n  " + e;
    usage_error(msg);
  }
  const Dictionary dict = spec.dictionary.load();
  for (int s : spec.sparsity)
    if (s > dict.rows() || s > dict.cols())
      usage_error("sparsity " + std::to_string(s) + " exceeds min(N, K) for this dictionary");

  ExperimentReport report;
  report.spec = trial_spec_to_json(spec);
  report.n = dict.rows();
  report.k = dict.cols();
  report.mutual_coherence = dict.cols() >= 2 ? mutual_coherence(dict) : 0.0;
  report.success_criterion = std::string(criterion_name(spec.success.criterion));

  const bool needs_graph = std::any_of(spec.solvers.begin(), spec.solvers.end(),
                                       [](const SolverEntry& e) { return e.kind == SolverKind::McgIrls; });
  const bool needs_partition = std::any_of(spec.solvers.begin(), spec.solvers.end(),
                                           [](const SolverEntry& e) { return e.kind == SolverKind::Combinatorial; });
  std::optional<CoherencyGraph> graph;
  if (needs_graph) {
    graph.emplace(build_mcg(dict, spec.mcg.order, spec.mcg.threshold, spec.mcg.prune, spec.limits));
    report.solver_graph_ill_subsets = graph->ill_subsets().size();
  }
  std::optional<Partition> partition;
  if (needs_partition) {
    const McgParams gp = spec.partition->graph.value_or(spec.mcg);
    const auto rank_graph = build_mcg(dict, gp.order, gp.threshold, gp.prune, spec.limits);
    partition = rank_illness(rank_graph, spec.partition->m);
    report.partition_d2 = partition->d2;
  }
  for (int order : spec.correlation_orders) {
    const auto g = build_mcg(dict, order, spec.correlation_threshold, {}, spec.limits);
    report.memberships.push_back({order, g.ill_subsets().size(), g.membership_counts()});
  }

  SweepContext ctx{dict, graph ? &*graph : nullptr, partition ? &*partition : nullptr,
                   spec.partition ? spec.partition->p : 0, spec.success, spec.limits};
  const auto n_solvers = spec.solvers.size();
  const auto k = static_cast<std::size_t>(dict.cols());
  for (const auto& e : spec.solvers) {
    SolverReport sr;
    sr.label = e.label;
    sr.kind = e.kind;
    sr.atom_errors.assign(k, 0);
    sr.atom_false_alarms.assign(k, 0);
    report.solvers.push_back(std::move(sr));
  }

  const int threads = spec.threads > 0 ? spec.threads : omp_get_max_threads();
  for (int s : spec.sparsity) {
    const auto trials = static_cast<std::size_t>(spec.trials_per_s);
    std::vector<std::vector<int>> truth(trials);
    std::vector<Outcome> outcomes(trials * n_solvers);
    const auto n_trials = static_cast<std::ptrdiff_t>(trials);
#pragma omp parallel for num_threads(threads) schedule(dynamic, 4)
    for (std::ptrdiff_t t = 0; t < n_trials; ++t) {
      const auto sig = synth_signal(dict, s, trial_seed(spec.master_seed, s, static_cast<int>(t)));
      for (std::size_t v = 0; v < n_solvers; ++v)
        outcomes[static_cast<std::size_t>(t) * n_solvers + v] = run_one(ctx, spec.solvers[v], sig);
      truth[static_cast<std::size_t>(t)] = sig.support;
    }

    // Reduction in trial order, independent of scheduling.
    for (std::size_t v = 0; v < n_solvers; ++v) {
      auto& sr = report.solvers[v];
      SparsityStats st;
      st.sparsity = s;
      st.trials = spec.trials_per_s;
      long iter_sum = 0;
      int iter_count = 0;
      for (std::size_t t = 0; t < trials; ++t) {
        const Outcome& o = outcomes[t * n_solvers + v];
        const auto& sup = truth[t];
        if (o.error) ++st.solver_errors;
        if (o.success) ++st.successes;
        if (!o.error) {
          iter_sum += o.iterations;
          ++iter_count;
        }
        if (!o.success) {
          for (int i : sup)
            if (!std::binary_search(o.estimated.begin(), o.estimated.end(), i)) ++sr.atom_errors[static_cast<std::size_t>(i)];
          for (int i : o.estimated)
            if (!std::binary_search(sup.begin(), sup.end(), i)) ++sr.atom_false_alarms[static_cast<std::size_t>(i)];
        }
        if (spec.keep_trials)
          report.trials.push_back({static_cast<int>(v), s, static_cast<int>(t), o.success, o.error, o.iterations, sup,
                                   o.estimated});
      }
      st.mean_iterations = iter_count > 0 ? static_cast<double>(iter_sum) / iter_count : 0.0;
      sr.by_sparsity.push_back(st);
    }
  }

  for (auto& sr : report.solvers)
    for (const auto& m : report.memberships) sr.correlations.push_back({m.order, correlate(m.counts, sr.atom_errors)});
  return report;
}

std::vector<IterationProfile> iteration_profile(const ExperimentReport& report) {
  std::vector<IterationProfile> out;
  for (const auto& sr : report.solvers) {
    IterationProfile p;
    p.label = sr.label;
    for (const auto& st : sr.by_sparsity) p.points.push_back({st.sparsity, st.mean_iterations});
    out.push_back(std::move(p));
  }
  return out;
}

json report_to_json(const ExperimentReport& r) {
  json memberships = json::array();
  for (const auto& m : r.memberships)
    memberships.push_back({{"order", m.order}, {"ill_subsets", m.ill_subsets}, {"counts", m.counts}});
  json solvers = json::array();
  for (const auto& s : r.solvers) {
    json rows = json::array();
    for (const auto& st : s.by_sparsity)
      rows.push_back({{"sparsity", st.sparsity},
                      {"trials", st.trials},
                      {"successes", st.successes},
                      {"solver_errors", st.solver_errors},
                      {"rate", st.rate()},
                      {"mean_iterations", st.mean_iterations}});
    json corr = json::array();
    for (const auto& c : s.correlations)
      corr.push_back({{"order", c.order}, {"pearson", c.pearson ? json(*c.pearson) : json(nullptr)}});
    solvers.push_back({{"label", s.label},
                       {"kind", solver_kind_name(s.kind)},
                       {"by_sparsity", std::move(rows)},
                       {"atom_errors", s.atom_errors},
                       {"atom_false_alarms", s.atom_false_alarms},
                       {"correlations", std::move(corr)}});
  }
  return {{"spec", r.spec},
          {"dictionary", {{"n", r.n}, {"k", r.k}, {"mutual_coherence", r.mutual_coherence}}},
          {"success_criterion", r.success_criterion},
          {"solver_graph_ill_subsets", r.solver_graph_ill_subsets},
          {"partition_d2", r.partition_d2},
          {"memberships", std::move(memberships)},
          {"solvers", std::move(solvers)}};
}

ExperimentReport report_from_json(const json& j) {
  try {
    ExperimentReport r;
    r.spec = j.at("spec");
    r.n = j.at("dictionary").at("n").get<int>();
    r.k = j.at("dictionary").at("k").get<int>();
    r.mutual_coherence = j.at("dictionary").at("mutual_coherence").get<double>();
    r.success_criterion = j.at("success_criterion").get<std::string>();
    r.solver_graph_ill_subsets = j.at("solver_graph_ill_subsets").get<std::size_t>();
    r.partition_d2 = j.at("partition_d2").get<std::vector<int>>();
    for (const auto& m : j.at("memberships"))
      r.memberships.push_back({m.at("order").get<int>(), m.at("ill_subsets").get<std::size_t>(),
                               m.at("counts").get<std::vector<int>>()});
    for (const auto& s : j.at("solvers")) {
      SolverReport sr;
      sr.label = s.at("label").get<std::string>();
      sr.kind = parse_solver_kind(s.at("kind").get<std::string>());
      for (const auto& st : s.at("by_sparsity"))
        sr.by_sparsity.push_back({st.at("sparsity").get<int>(), st.at("trials").get<int>(),
                                  st.at("successes").get<int>(), st.at("solver_errors").get<int>(),
                                  st.at("mean_iterations").get<double>()});
      sr.atom_errors = s.at("atom_errors").get<std::vector<long>>();
      sr.atom_false_alarms = s.at("atom_false_alarms").get<std::vector<long>>();
      for (const auto& c : s.at("correlations")) {
        OrderCorrelation oc{c.at("order").get<int>(), std::nullopt};
        if (!c.at("pearson").is_null()) oc.pearson = c.at("pearson").get<double>();
        sr.correlations.push_back(oc);
      }
      r.solvers.push_back(std::move(sr));
    }
    return r;
  } catch (const json::exception& e) {
    usage_error(std::string("malformed report JSON: ") + e.what());
  }
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) io_error("cannot create directory '" + dir.string() + "': " + ec.message());

  std::string rates = "solver,sparsity,trials,successes,rate\n";
  std::string iters = "solver,sparsity,trials,mean_iterations\n";
  for (const auto& s : report.solvers) {
    for (const auto& st : s.by_sparsity) {
      rates += csv_field(s.label) + "," + std::to_string(st.sparsity) + "," + std::to_string(st.trials) + "," +
               std::to_string(st.successes) + "," + format_double(st.rate()) + "\n";
      iters += csv_field(s.label) + "," + std::to_string(st.sparsity) + "," + std::to_string(st.trials) + "," +
               format_double(st.mean_iterations) + "\n";
    }
  }

  std::string atoms = "solver,atom,error_count,false_alarm_count";
  for (const auto& m : report.memberships) atoms += ",membership_order" + std::to_string(m.order);
  atoms += "\n";
  for (const auto& s : report.solvers) {
    for (std::size_t i = 0; i < s.atom_errors.size(); ++i) {
      atoms += csv_field(s.label) + "," + std::to_string(i) + "," + std::to_string(s.atom_errors[i]) + "," +
               std::to_string(s.atom_false_alarms[i]);
      for (const auto& m : report.memberships) atoms += "," + std::to_string(m.counts[i]);
      atoms += "\n";
    }
  }

  std::string corr = "solver,order,pearson\n";
  for (const auto& s : report.solvers)
    for (const auto& c : s.correlations)
      corr += csv_field(s.label) + "," + std::to_string(c.order) + "," + (c.pearson ? format_double(*c.pearson) : "") + "\n";

  write_text_file_atomic(dir / "report.json", report_to_json(report).dump(2) + "\n");
  write_text_file_atomic(dir / "success_rates.csv", rates);
  write_text_file_atomic(dir / "iterations.csv", iters);
  write_text_file_atomic(dir / "atom_errors.csv", atoms);
  write_text_file_atomic(dir / "correlations.csv", corr);
  write_text_file_atomic(dir / "plot_report.py", kPlotScript);
}

}  // namespace coherency
