#pragma once

#include "coherency/dictionary.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace coherency {

struct IllSubset {
  SubsetIndex indices;
  double delta = 0.0;

  friend bool operator==(const IllSubset&, const IllSubset&) = default;
};

// Optional pair-coherence pruning: only subsets whose every internal pair has
// |gram| >= pair_threshold are examined. Off by default; when enabled without
// an explicit pair threshold, threshold / 2 is used.
struct PruneConfig {
  bool enabled = false;
  std::optional<double> pair_threshold;

  double effective_pair_threshold(double threshold) const { return pair_threshold.value_or(threshold / 2.0); }
};

// Matrix coherency graph: order-s atom subsets with delta >= T, stored as
// hyperedges in lexicographic order, plus their pairwise clique expansion.
class CoherencyGraph {
 public:
  CoherencyGraph(int order, double threshold, int num_nodes, std::vector<IllSubset> ill_subsets, bool pruned = false);

  int order() const noexcept { return order_; }
  double threshold() const noexcept { return threshold_; }
  int num_nodes() const noexcept { return num_nodes_; }
  // True when built with pruning: the list is then a lower bound on the exhaustive one.
  bool pruned() const noexcept { return pruned_; }
  const std::vector<IllSubset>& ill_subsets() const noexcept { return ill_; }
  const std::vector<int>& membership_counts() const noexcept { return counts_; }
  // Sum of deltas over the ill subsets containing each atom.
  const std::vector<double>& membership_delta_sums() const noexcept { return delta_sums_; }

  bool adjacent(int i, int j) const;
  // Sorted neighbors of i, excluding i.
  const std::vector<int>& neighbors(int i) const;
  std::size_t num_edges() const noexcept { return num_edges_; }

  friend bool operator==(const CoherencyGraph& a, const CoherencyGraph& b) {
    return a.order_ == b.order_ && a.threshold_ == b.threshold_ && a.num_nodes_ == b.num_nodes_ &&
           a.pruned_ == b.pruned_ && a.ill_ == b.ill_;
  }

 private:
  int order_;
  double threshold_;
  int num_nodes_;
  bool pruned_;
  std::vector<IllSubset> ill_;
  std::vector<int> counts_;
  std::vector<double> delta_sums_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<char> adjacency_;
  std::size_t num_edges_ = 0;
};

// Exhaustive enumeration kernels over a Gram matrix. Results are in lexicographic order.
std::vector<IllSubset> enumerate_ill_subsets_serial(const Eigen::MatrixXd& gram, int order, double threshold);
std::vector<IllSubset> enumerate_ill_subsets(const Eigen::MatrixXd& gram, int order, double threshold);
// Pruned enumeration: only subsets that are cliques of the |gram| >= pair_threshold graph.
std::vector<IllSubset> enumerate_ill_subsets_pruned(const Eigen::MatrixXd& gram, int order, double threshold,
                                                    double pair_threshold);

CoherencyGraph build_mcg(const Dictionary& dict, int order, double threshold, const PruneConfig& prune = {},
                         const EnumerationLimits& limits = {});

// {i} together with every atom sharing an ill subset with i.
SubsetIndex neighborhood(const CoherencyGraph& graph, int i);
std::vector<int> membership_histogram(const CoherencyGraph& graph);

enum class GraphFormat { Dot, Json };

std::string export_dot(const CoherencyGraph& graph);
std::string export_json(const CoherencyGraph& graph);
std::string export_graph(const CoherencyGraph& graph, GraphFormat format);
CoherencyGraph import_json(std::string_view text);

}  // namespace coherency
