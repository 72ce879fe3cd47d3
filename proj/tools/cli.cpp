#include "cli.hpp"

#include "coherency/combinations.hpp"
#include "coherency/dictionary.hpp"
#include "coherency/error.hpp"
#include "coherency/experiments.hpp"
#include "coherency/mcg.hpp"
#include "coherency/solvers.hpp"
#include "coherency/text_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <sstream>

namespace coherency {

namespace {

using nlohmann::json;

// Config files are JSON: top-level keys set global flags, and an object keyed
// by a subcommand name sets that subcommand's flags. Command-line flags win.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}\n"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  static void flatten(const json& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        auto next = parents;
        next.push_back(key);
        flatten(value, next, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }
};

struct GenArgs {
  std::string kind;
  int n = 15;
  int k = 25;
  std::uint64_t seed = 1;
  int n1 = 3;
  int n2 = 3;
  int redundancy = 4;
  std::string out;
};

struct GraphArgs {
  int order = 3;
  double threshold = 0.4;
  bool prune = false;
  double pair_threshold = 0.0;  // 0: threshold / 2
  std::uint64_t max_subsets = EnumerationLimits{}.max_subsets;

  PruneConfig prune_config() const {
    PruneConfig p;
    p.enabled = prune;
    if (pair_threshold > 0.0) p.pair_threshold = pair_threshold;
    return p;
  }
};

struct McgArgs {
  std::string dict;
  bool no_normalize = false;
  GraphArgs graph;
  std::string out;
  std::string format;
  int top = 6;
};

struct SolveArgs {
  std::string dict;
  bool no_normalize = false;
  std::string y;
  int synth_s = 0;
  std::uint64_t synth_seed = 1;
  std::string solver = "l1";
  SolverConfig cfg;
  std::string aggregate = "max-abs";
  std::string graph_path;
  GraphArgs graph;
  int m = 0;
  int p = -1;
  std::string out;
};

struct ExperimentArgs {
  std::string spec;
  std::string out;
  int trials = 0;
};

struct PerrorArgs {
  int k = 200;
  int s = 12;
  int m2 = 20;
  int p = 6;
};

void add_graph_flags(CLI::App* cmd, GraphArgs& g, const std::string& what) {
  cmd->add_option("--order", g.order, "Sub-dictionary size of the " + what)->capture_default_str();
  cmd->add_option("--threshold", g.threshold, "Illness threshold T on delta, in (0, 1)")->capture_default_str();
  cmd->add_flag("--prune", g.prune, "Only evaluate cliques of the pair-coherence graph");
  cmd->add_option("--pair-threshold", g.pair_threshold, "Pair coherence needed to join a pruned candidate (0: T/2)")
      ->capture_default_str();
  cmd->add_option("--max-subsets", g.max_subsets, "Cap on exhaustively enumerated subsets")->capture_default_str();
}

void add_solver_flags(CLI::App* cmd, SolverConfig& c, std::string& aggregate) {
  cmd->add_option("--max-iters", c.max_iters, "Maximum reweighting iterations")->capture_default_str();
  cmd->add_option("--damping-init", c.damping_init, "Initial damping, relative to the starting iterate")
      ->capture_default_str();
  cmd->add_option("--damping-decay", c.damping_decay, "Damping multiplier per continuation step")->capture_default_str();
  cmd->add_option("--damping-step-tol", c.damping_step_tol, "Relative change that triggers a damping step")
      ->capture_default_str();
  cmd->add_option("--damping-min", c.damping_min, "Damping floor")->capture_default_str();
  cmd->add_option("--convergence-tol", c.convergence_tol, "Relative change that ends the iteration")
      ->capture_default_str();
  cmd->add_option("--support-tol", c.support_tol, "Support threshold relative to max |x|")->capture_default_str();
  cmd->add_option("--noise-variance", c.noise_variance, "sigma^2 for the regularized IRLS update")->capture_default_str();
  cmd->add_option("--ramp-iters", c.pq.ramp_iters, "Iterations of the p/q exponent ramp")->capture_default_str();
  cmd->add_option("--neighbor-aggregate", aggregate, "Neighborhood magnitude for mcg-irls")
      ->check(CLI::IsMember({"max-abs", "root-sum-squares"}))
      ->capture_default_str();
  cmd->add_option("--feasibility-tol", c.feasibility_tol, "Relative residual accepted by the combinatorial solver")
      ->capture_default_str();
}

Eigen::VectorXd read_vector(const std::string& path, int n) {
  std::istringstream in(read_text_file(path));
  std::vector<double> v;
  std::string tok;
  while (in >> tok) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      usage_error("'" + path + "': '" + tok + "' is not a number");
    }
  }
  if (static_cast<int>(v.size()) != n)
    usage_error("'" + path + "' holds " + std::to_string(v.size()) + " values but the dictionary has N = " +
                std::to_string(n));
  return Eigen::Map<Eigen::VectorXd>(v.data(), n);
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (int x : v) s += (s.empty() ? "" : " ") + std::to_string(x);
  return s;
}

void run_gen(const GenArgs& a, std::ostream& out) {
  Dictionary d = [&] {
    if (a.kind == "gaussian") return gen_gaussian(a.n, a.k, a.seed);
    if (a.kind == "odct") return gen_odct(a.n, a.k);
    return gen_odct2d(a.n1, a.n2, a.redundancy);
  }();
  if (!a.out.empty()) write_dictionary(a.out, d);
  out << "N " << d.rows() << " K " << d.cols() << " mutual_coherence "
      << (d.cols() > 1 ? format_double(mutual_coherence(d)) : "0") << "\n";
}

void run_mcg(const McgArgs& a, std::ostream& out) {
  const Dictionary d = read_dictionary(a.dict, !a.no_normalize);
  const auto& g = a.graph;
  const CoherencyGraph graph = build_mcg(d, g.order, g.threshold, g.prune_config(), {g.max_subsets});

  out << "ill subsets " << graph.ill_subsets().size() << " edges " << graph.num_edges() << " (order " << g.order
      << ", threshold " << format_double(g.threshold) << ")\n";
  if (g.prune) out << "pruned build: the list is a lower bound on the exhaustive one\n";
  if (g.prune && binomial(d.cols(), g.order) <= g.max_subsets) {
    const auto full = build_mcg(d, g.order, g.threshold, {}, {g.max_subsets});
    out << "exhaustive ill subsets " << full.ill_subsets().size() << "\n";
  }
  if (a.top > 0 && d.cols() > 1) {
    const Partition part = rank_illness(graph, std::min(a.top, d.cols() - 1));
    // rank_illness returns d2 sorted; reorder by membership for display.
    std::vector<int> ranked = part.d2;
    const auto& counts = graph.membership_counts();
    std::stable_sort(ranked.begin(), ranked.end(), [&](int x, int y) {
      return counts[static_cast<std::size_t>(x)] > counts[static_cast<std::size_t>(y)];
    });
    out << "top atoms";
    for (int i : ranked) out << " " << i << ":" << counts[static_cast<std::size_t>(i)];
    out << "\n";
  }

  if (!a.out.empty()) {
    GraphFormat fmt = GraphFormat::Dot;
    if (a.format == "json" || (a.format.empty() && std::filesystem::path(a.out).extension() == ".json"))
      fmt = GraphFormat::Json;
    write_text_file_atomic(a.out, export_graph(graph, fmt));
  }
}

void run_solve(SolveArgs a, std::ostream& out) {
  const Dictionary d = read_dictionary(a.dict, !a.no_normalize);
  const SolverKind kind = parse_solver_kind(a.solver);
  a.cfg.neighbor_aggregate = a.aggregate == "max-abs" ? NeighborAggregate::MaxAbs : NeighborAggregate::RootSumSquares;
  a.cfg.validate();

  if (a.y.empty() == (a.synth_s == 0)) usage_error("give exactly one of --y or --synth-s");
  std::optional<SyntheticSignal> sig;
  Eigen::VectorXd y;
  if (a.synth_s > 0) {
    sig = synth_signal(d, a.synth_s, a.synth_seed);
    y = sig->y;
  } else {
    y = read_vector(a.y, d.rows());
  }

  auto load_graph = [&]() -> std::optional<CoherencyGraph> {
    if (a.graph_path.empty()) return std::nullopt;
    auto g = import_json(read_text_file(a.graph_path));
    if (g.num_nodes() != d.cols())
      usage_error("graph has " + std::to_string(g.num_nodes()) + " nodes but the dictionary has K = " +
                  std::to_string(d.cols()));
    return g;
  };

  SparseSolution sol;
  json extra;
  switch (kind) {
    case SolverKind::L1: sol = solve_l1(d, y, a.cfg); break;
    case SolverKind::Irls: sol = solve_irls(d, y, a.cfg); break;
    case SolverKind::McgIrls: {
      auto g = load_graph();
      if (!g) usage_error("--solver mcg-irls needs --graph (build one with the mcg subcommand)");
      sol = solve_mcg_irls(d, *g, y, a.cfg);
      break;
    }
    case SolverKind::Combinatorial: {
      if (a.m < 1 || a.p < 0) usage_error("--solver combinatorial needs --m and --p");
      auto g = load_graph();
      if (!g) g = build_mcg(d, a.graph.order, a.graph.threshold, a.graph.prune_config(), {a.graph.max_subsets});
      const Partition part = rank_illness(*g, a.m);
      const auto res = solve_combinatorial(d, part, a.p, y, a.cfg, {a.graph.max_subsets});
      sol = res.solution;
      extra = {{"d2", part.d2}, {"winning_d2", res.winning_d2}, {"subproblems", res.subproblems},
               {"feasible_subproblems", res.feasible}};
      break;
    }
  }

  json j = json::parse(solution_to_json(sol));
  j["solver"] = a.solver;
  if (!extra.is_null()) j.update(extra);
  if (sig) {
    j["true_support"] = sig->support;
    j["exact_recovery"] = sol.support == sig->support;
  }
  if (a.out.empty()) {
    out << j.dump(2) << "\n";
    return;
  }
  write_text_file_atomic(a.out, j.dump(2) + "\n");
  out << "solver " << a.solver << " iterations " << sol.iterations << " support [" << join_ints(sol.support)
      << "] residual " << format_double(sol.residual_norm) << "\n";
  if (extra.contains("subproblems")) out << "subproblems " << extra["subproblems"].get<std::size_t>() << "\n";
  if (sig) out << "exact recovery " << (sol.support == sig->support ? "yes" : "no") << "\n";
}

void run_experiment(const ExperimentArgs& a, int threads, std::ostream& out) {
  json j;
  try {
    j = json::parse(read_text_file(a.spec));
  } catch (const json::exception& e) {
    usage_error("'" + a.spec + "' is not valid JSON: " + e.what());
  }
  if (a.trials > 0 && j.is_object()) j["trials_per_s"] = a.trials;
  TrialSpec spec = trial_spec_from_json(j);
  spec.threads = threads;
  const ExperimentReport report = run_recovery_sweep(spec);
  write_report(report, a.out);

  out << "dictionary " << report.n << "x" << report.k << ", " << spec.trials_per_s << " trials per sparsity\n";
  for (const auto& s : report.solvers) {
    out << s.label << ":";
    for (const auto& st : s.by_sparsity) out << " s=" << st.sparsity << ":" << format_double(st.rate());
    out << "\n";
    for (const auto& c : s.correlations)
      out << "  correlation order " << c.order << " " << (c.pearson ? format_double(*c.pearson) : "undefined") << "\n";
  }
  out << "wrote " << a.out << "\n";
}

void run_perror(const PerrorArgs& a, std::ostream& out) {
  const auto pe = error_probability(a.k, a.s, a.m2, a.p);
  out << "exact " << format_double(pe.exact) << "\nbound " << format_double(pe.bound) << "\n";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return 1;
    case ErrorKind::Numerical: return 2;
    case ErrorKind::Io: return 3;
  }
  return 1;
}

std::string one_line(std::string msg) {
  for (std::size_t pos; (pos = msg.find("\n  ")) != std::string::npos;) msg.replace(pos, 3, " ");
  std::replace(msg.begin(), msg.end(), '\n', ' ');
  return msg;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dictionary conditioning, coherency graphs and sparse recovery", "mcg"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file of flag values; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1, 1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (0: OpenMP default)")->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a dictionary");
  gen_cmd->add_option("kind", gen.kind, "gaussian | odct | odct2d")
      ->required()
      ->check(CLI::IsMember({"gaussian", "odct", "odct2d"}));
  gen_cmd->add_option("--n", gen.n, "Rows (gaussian, odct)")->capture_default_str();
  gen_cmd->add_option("--k", gen.k, "Atoms (gaussian, odct)")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Random seed (gaussian)")->capture_default_str();
  gen_cmd->add_option("--n1", gen.n1, "Patch height (odct2d)")->capture_default_str();
  gen_cmd->add_option("--n2", gen.n2, "Patch width (odct2d)")->capture_default_str();
  gen_cmd->add_option("--redundancy", gen.redundancy, "Atoms per row, a perfect square (odct2d)")->capture_default_str();
  gen_cmd->add_option("-o,--out", gen.out, "Dictionary file to write");

  McgArgs mcg;
  auto* mcg_cmd = app.add_subcommand("mcg", "Build a matrix coherency graph");
  mcg_cmd->add_option("--dict", mcg.dict, "Dictionary file")->required();
  mcg_cmd->add_flag("--no-normalize", mcg.no_normalize, "Require unit-norm columns instead of normalizing");
  add_graph_flags(mcg_cmd, mcg.graph, "ill subsets");
  mcg_cmd->add_option("--top", mcg.top, "Number of most-involved atoms to print")->capture_default_str();
  mcg_cmd->add_option("-o,--out", mcg.out, "Graph file to write");
  mcg_cmd->add_option("--format", mcg.format, "dot | json (default: from the file extension)")
      ->check(CLI::IsMember({"dot", "json"}));

  SolveArgs solve;
  auto* solve_cmd = app.add_subcommand("solve", "Recover a sparse representation of one signal");
  solve_cmd->add_option("--dict", solve.dict, "Dictionary file")->required();
  solve_cmd->add_flag("--no-normalize", solve.no_normalize, "Require unit-norm columns instead of normalizing");
  solve_cmd->add_option("--y", solve.y, "Signal file: N whitespace-separated numbers");
  solve_cmd->add_option("--synth-s", solve.synth_s, "Synthesize a signal with this many nonzeros")
      ->check(CLI::NonNegativeNumber);
  solve_cmd->add_option("--synth-seed", solve.synth_seed, "Seed of the synthesized signal")->capture_default_str();
  solve_cmd->add_option("--solver", solve.solver, "l1 | irls | mcg-irls | combinatorial")
      ->check(CLI::IsMember({"l1", "irls", "mcg-irls", "combinatorial"}))
      ->capture_default_str();
  add_solver_flags(solve_cmd, solve.cfg, solve.aggregate);
  solve_cmd->add_option("--graph", solve.graph_path, "Graph JSON from the mcg subcommand");
  add_graph_flags(solve_cmd, solve.graph, "graph built for combinatorial ranking when --graph is absent");
  solve_cmd->add_option("--m", solve.m, "Size of the ill part (combinatorial)");
  solve_cmd->add_option("--p", solve.p, "Ill atoms allowed per candidate (combinatorial)");
  solve_cmd->add_option("-o,--out", solve.out, "Solution JSON to write (default: stdout)");

  ExperimentArgs exp;
  auto* exp_cmd = app.add_subcommand("experiment", "Run a Monte Carlo recovery sweep from a JSON spec");
  exp_cmd->add_option("--spec", exp.spec, "Experiment spec JSON")->required();
  exp_cmd->add_option("-o,--out", exp.out, "Output directory")->required();
  exp_cmd->add_option("--trials", exp.trials, "Override trials_per_s from the spec")->check(CLI::PositiveNumber);

  PerrorArgs perr;
  auto* perr_cmd = app.add_subcommand("perror", "Probability that a random support overloads the ill part");
  perr_cmd->add_option("--k", perr.k, "Atoms")->capture_default_str();
  perr_cmd->add_option("--s", perr.s, "Sparsity")->capture_default_str();
  perr_cmd->add_option("--m2", perr.m2, "Ill-part size")->capture_default_str();
  perr_cmd->add_option("--p", perr.p, "Ill atoms tolerated")->capture_default_str();

  for (auto* cmd : {gen_cmd, mcg_cmd, solve_cmd, exp_cmd, perr_cmd})
    cmd->allow_config_extras(CLI::config_extras_mode::error);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 1;
  }

  try {
    if (threads > 0) omp_set_num_threads(threads);
    if (*gen_cmd) run_gen(gen, out);
    if (*mcg_cmd) run_mcg(mcg, out);
    if (*solve_cmd) run_solve(solve, out);
    if (*exp_cmd) run_experiment(exp, threads, out);
    if (*perr_cmd) run_perror(perr, out);
  } catch (const Error& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 2;
  }
  return 0;
}

}  // namespace coherency
