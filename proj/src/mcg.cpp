#include "coherency/mcg.hpp"

#include "coherency/combinations.hpp"
#include "coherency/error.hpp"
#include "coherency/text_io.hpp"

#include <json.hpp>
#include <omp.h>

#include <algorithm>
#include <cmath>

namespace coherency {

using nlohmann::json;

CoherencyGraph::CoherencyGraph(int order, double threshold, int num_nodes, std::vector<IllSubset> ill_subsets,
                               bool pruned)
    : order_(order), threshold_(threshold), num_nodes_(num_nodes), pruned_(pruned), ill_(std::move(ill_subsets)) {
  if (order < 2) usage_error("graph order must be at least 2");
  if (!(threshold > 0.0 && threshold < 1.0)) usage_error("threshold must lie strictly between 0 and 1");
  if (num_nodes < 1) usage_error("graph needs at least one node");

  const auto k = static_cast<std::size_t>(num_nodes);
  counts_.assign(k, 0);
  delta_sums_.assign(k, 0.0);
  adjacency_.assign(k * k, 0);
  for (std::size_t e = 0; e < ill_.size(); ++e) {
    const auto& s = ill_[e];
    if (static_cast<int>(s.indices.size()) != order) usage_error("ill subset size differs from graph order");
    s.indices.check_range(num_nodes);
    if (s.delta < threshold) usage_error("ill subset delta below the graph threshold");
    if (e > 0 && !(ill_[e - 1].indices < s.indices)) usage_error("ill subsets must be in strictly lexicographic order");
    for (int a : s.indices) {
      ++counts_[static_cast<std::size_t>(a)];
      delta_sums_[static_cast<std::size_t>(a)] += s.delta;
      for (int b : s.indices)
        if (a != b) adjacency_[static_cast<std::size_t>(a) * k + static_cast<std::size_t>(b)] = 1;
    }
  }
  neighbors_.resize(k);
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = 0; b < k; ++b) {
      if (adjacency_[a * k + b]) {
        neighbors_[a].push_back(static_cast<int>(b));
        if (a < b) ++num_edges_;
      }
    }
  }
}

bool CoherencyGraph::adjacent(int i, int j) const {
  if (i < 0 || j < 0 || i >= num_nodes_ || j >= num_nodes_) usage_error("node index out of range");
  return adjacency_[static_cast<std::size_t>(i) * static_cast<std::size_t>(num_nodes_) + static_cast<std::size_t>(j)] != 0;
}

const std::vector<int>& CoherencyGraph::neighbors(int i) const {
  if (i < 0 || i >= num_nodes_) usage_error("node index " + std::to_string(i) + " out of range");
  return neighbors_[static_cast<std::size_t>(i)];
}

namespace {

void scan_range(const Eigen::MatrixXd& gram, int order, double threshold, RankRange range,
                std::vector<IllSubset>& out) {
  std::vector<double> scratch(static_cast<std::size_t>(order * order));
  for_each_combination(static_cast<int>(gram.cols()), order, range.begin, range.end, [&](std::span<const int> c) {
    const double delta = subset_delta(gram, c, scratch);
    if (delta >= threshold) out.push_back({SubsetIndex(std::vector<int>(c.begin(), c.end())), delta});
  });
}

void check_enumeration_args(const Eigen::MatrixXd& gram, int order, double threshold) {
  if (order < 2 || order > gram.cols()) usage_error("graph order must lie in [2, K]");
  if (!(threshold > 0.0 && threshold < 1.0)) usage_error("threshold must lie strictly between 0 and 1");
}

// Depth-first extension of cliques in the pair graph, in lexicographic order.
void extend_clique(const Eigen::MatrixXd& gram, const std::vector<std::vector<int>>& later, int order,
                   double threshold, std::vector<int>& clique, std::vector<double>& scratch,
                   std::vector<IllSubset>& out) {
  if (static_cast<int>(clique.size()) == order) {
    const double delta = subset_delta(gram, clique, scratch);
    if (delta >= threshold) out.push_back({SubsetIndex(clique), delta});
    return;
  }
  for (int cand : later[static_cast<std::size_t>(clique.back())]) {
    bool joins = true;
    for (std::size_t m = 0; m + 1 < clique.size() && joins; ++m)
      joins = std::binary_search(later[static_cast<std::size_t>(clique[m])].begin(),
                                 later[static_cast<std::size_t>(clique[m])].end(), cand);
    if (!joins) continue;
    clique.push_back(cand);
    extend_clique(gram, later, order, threshold, clique, scratch, out);
    clique.pop_back();
  }
}

}  // namespace

std::vector<IllSubset> enumerate_ill_subsets_serial(const Eigen::MatrixXd& gram, int order, double threshold) {
  check_enumeration_args(gram, order, threshold);
  std::vector<IllSubset> out;
  scan_range(gram, order, threshold, {0, binomial(static_cast<int>(gram.cols()), order)}, out);
  return out;
}

std::vector<IllSubset> enumerate_ill_subsets(const Eigen::MatrixXd& gram, int order, double threshold) {
  check_enumeration_args(gram, order, threshold);
  const auto ranges = partition_ranks(binomial(static_cast<int>(gram.cols()), order),
                                      static_cast<std::uint64_t>(omp_get_max_threads()) * 8);
  std::vector<std::vector<IllSubset>> parts(ranges.size());
  const auto num_parts = static_cast<std::ptrdiff_t>(ranges.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t p = 0; p < num_parts; ++p)
    scan_range(gram, order, threshold, ranges[static_cast<std::size_t>(p)], parts[static_cast<std::size_t>(p)]);

  std::vector<IllSubset> out;
  for (auto& part : parts) std::move(part.begin(), part.end(), std::back_inserter(out));
  return out;
}

std::vector<IllSubset> enumerate_ill_subsets_pruned(const Eigen::MatrixXd& gram, int order, double threshold,
                                                    double pair_threshold) {
  check_enumeration_args(gram, order, threshold);
  if (!(pair_threshold > 0.0 && pair_threshold <= 1.0)) usage_error("pair threshold must lie in (0, 1]");
  const int k = static_cast<int>(gram.cols());
  // later[i]: higher-indexed atoms coherent enough with i to share a candidate subset.
  std::vector<std::vector<int>> later(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j)
      if (std::abs(gram(i, j)) >= pair_threshold) later[static_cast<std::size_t>(i)].push_back(j);

  std::vector<std::vector<IllSubset>> parts(static_cast<std::size_t>(k));
#pragma omp parallel for schedule(dynamic)
  for (int first = 0; first < k; ++first) {
    std::vector<int> clique{first};
    std::vector<double> scratch(static_cast<std::size_t>(order * order));
    extend_clique(gram, later, order, threshold, clique, scratch, parts[static_cast<std::size_t>(first)]);
  }
  std::vector<IllSubset> out;
  for (auto& part : parts) std::move(part.begin(), part.end(), std::back_inserter(out));
  return out;
}

CoherencyGraph build_mcg(const Dictionary& dict, int order, double threshold, const PruneConfig& prune,
                         const EnumerationLimits& limits) {
  if (order < 2 || order > std::min(dict.rows(), dict.cols()))
    usage_error("graph order must lie in [2, min(N, K)]");
  if (!(threshold > 0.0 && threshold < 1.0)) usage_error("threshold must lie strictly between 0 and 1");
  const Eigen::MatrixXd gram = dict.gram();
  if (prune.enabled) {
    auto ill = enumerate_ill_subsets_pruned(gram, order, threshold, prune.effective_pair_threshold(threshold));
    return CoherencyGraph(order, threshold, dict.cols(), std::move(ill), true);
  }
  const std::uint64_t count = binomial(dict.cols(), order);
  if (count > limits.max_subsets)
    usage_error("C(" + std::to_string(dict.cols()) + ", " + std::to_string(order) + ") = " + std::to_string(count) +
                " subsets exceeds the enumeration cap of " + std::to_string(limits.max_subsets) +
                "; enable pruning, lower the order or raise the cap");
  return CoherencyGraph(order, threshold, dict.cols(), enumerate_ill_subsets(gram, order, threshold), false);
}

SubsetIndex neighborhood(const CoherencyGraph& graph, int i) {
  std::vector<int> out = graph.neighbors(i);
  out.insert(std::upper_bound(out.begin(), out.end(), i), i);
  return SubsetIndex(std::move(out));
}

std::vector<int> membership_histogram(const CoherencyGraph& graph) { return graph.membership_counts(); }

std::string export_dot(const CoherencyGraph& graph) {
  std::string out = "graph mcg {\n";
  out += "  // order " + std::to_string(graph.order()) + ", threshold " + format_double(graph.threshold()) + "\n";
  for (int i = 0; i < graph.num_nodes(); ++i)
    out += "  " + std::to_string(i) + " [label=\"" + std::to_string(i) + "\"];\n";
  for (int i = 0; i < graph.num_nodes(); ++i)
    for (int j : graph.neighbors(i))
      if (j > i) out += "  " + std::to_string(i) + " -- " + std::to_string(j) + ";\n";
  out += "}\n";
  return out;
}

std::string export_json(const CoherencyGraph& graph) {
  json subsets = json::array();
  for (const auto& s : graph.ill_subsets()) subsets.push_back({{"indices", s.indices.indices()}, {"delta", s.delta}});
  json j = {{"order", graph.order()},
            {"threshold", graph.threshold()},
            {"num_nodes", graph.num_nodes()},
            {"pruned", graph.pruned()},
            {"ill_subsets", std::move(subsets)}};
  return j.dump(2) + "\n";
}

std::string export_graph(const CoherencyGraph& graph, GraphFormat format) {
  return format == GraphFormat::Dot ? export_dot(graph) : export_json(graph);
}

CoherencyGraph import_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    std::vector<IllSubset> ill;
    for (const auto& s : j.at("ill_subsets"))
      ill.push_back({SubsetIndex(s.at("indices").get<std::vector<int>>()), s.at("delta").get<double>()});
    return CoherencyGraph(j.at("order").get<int>(), j.at("threshold").get<double>(), j.at("num_nodes").get<int>(),
                          std::move(ill), j.value("pruned", false));
  } catch (const json::exception& e) {
    usage_error(std::string("malformed graph JSON: ") + e.what());
  }
}

}  // namespace coherency
