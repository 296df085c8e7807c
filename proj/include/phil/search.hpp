#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "phil/graph.hpp"
#include "phil/model.hpp"
#include "phil/oracle.hpp"

namespace phil {

struct SearchResult {
    std::size_t expansions = 0;
    bool found = false;
    std::vector<NodeId> path;              // start -> goal, empty when not found
    std::int64_t path_length = -1;         // edges on `path`, -1 when not found
    std::vector<NodeId> expansion_log;     // popped nodes in order
    std::vector<std::uint32_t> neighbor_reads;  // per expansion; learned drivers only
    std::vector<std::uint32_t> new_nodes;       // |V_new| per expansion; learned drivers only
    double wall_time = 0.0;                // seconds
};

enum class HeuristicTag { Euclidean, Manhattan, Chebyshev, Zero, Oracle, Learned, DistanceModel };

std::string to_string(HeuristicTag tag);

/// A node-to-goal scoring rule. Learned and distance-model tags carry a model handle.
struct HeuristicKind {
    HeuristicTag tag = HeuristicTag::Euclidean;
    std::shared_ptr<const HeuristicNet> net;
    std::shared_ptr<const DistanceMlp> distance_model;

    static HeuristicKind of(HeuristicTag t) { return {t, nullptr, nullptr}; }
};

/// Per-node score for a fixed goal.
using NodeHeuristic = std::function<double(NodeId)>;

/// Builds the scoring function for static tags (everything but Learned).
/// Oracle needs `oracle`; it is computed on demand when null.
NodeHeuristic make_node_heuristic(const Graph& graph, NodeId goal, const HeuristicKind& kind,
                                  const DistanceField* oracle = nullptr);

/// Scores the nodes of V_new; `scores` has the same length as `fresh`.
using BatchScorer = std::function<void(std::span<const NodeId> fresh, std::span<double> scores)>;

/// Greedy best-first search. The start pop counts as the first expansion, only
/// newly opened nodes are scored, scores are final, ties go to the earlier
/// insertion, and the search stops when the goal is popped. budget = 0 means |V|.
SearchResult best_first(const Graph& graph, NodeId start, NodeId goal, const BatchScorer& scorer,
                        std::size_t budget = 0);
SearchResult best_first(const Graph& graph, NodeId start, NodeId goal, const NodeHeuristic& h,
                        std::size_t budget = 0);
SearchResult best_first(const Graph& graph, NodeId start, NodeId goal, const HeuristicKind& kind,
                        std::size_t budget = 0, std::size_t n = 4, std::uint64_t seed = 0);

/// A* with unit edge costs. Open nodes are re-queued when reached with a
/// smaller g; closed nodes are never reopened.
SearchResult astar(const Graph& graph, NodeId start, NodeId goal, const NodeHeuristic& h, std::size_t budget = 0);

SearchResult bfs(const Graph& graph, NodeId start, NodeId goal, std::size_t budget = 0);

/// Hop distance from every free cell to the nearest free cell bordering an obstacle.
/// Requires grid metadata.
std::vector<std::int32_t> obstacle_distance(const Graph& graph);

/// Round-robin greedy search over one shared OPEN set: expansion k pops from the
/// queue ordered by heuristic k mod H.
SearchResult mha_star(const Graph& graph, NodeId start, NodeId goal, const std::vector<NodeHeuristic>& heuristics,
                      std::size_t budget = 0);
/// Euclidean, Manhattan and obstacle distance, the usual grid configuration.
std::vector<NodeHeuristic> default_mha_heuristics(const Graph& graph, NodeId goal);

struct BfwsOptions {
    int bins = 16;
    /// Per-dimension [min, max] used for binning; defaults to the graph's feature range.
    std::vector<std::pair<double, double>> bounds;
};

/// Width-1 novelty search: priority (novelty, Euclidean distance, insertion order),
/// novelty 1 when a node shows a feature bin unseen so far in this search.
SearchResult bfws(const Graph& graph, NodeId start, NodeId goal, std::size_t budget = 0, const BfwsOptions& options = {});

/// Runs the learned heuristic online: V_new of each expansion is scored in one
/// forward pass that also advances the memory state.
class PhilScorer {
public:
    PhilScorer(const Graph& graph, const HeuristicNet& net, NodeId goal, std::size_t n, std::uint64_t seed);

    /// Samples observations for `fresh` (counts neighbor reads).
    std::vector<Observation> observe(std::span<const NodeId> fresh);
    /// Scores observations in hop units and replaces the memory with z_{t+1}.
    std::vector<double> score(std::span<const Observation> observations);
    void operator()(std::span<const NodeId> fresh, std::span<double> scores);

    const Tensor& memory() const { return z_; }
    void set_memory(Tensor z) { z_ = std::move(z); }
    std::uint64_t neighbor_reads() const { return counter_.neighbor_feature_reads; }

private:
    const Graph& graph_;
    const HeuristicNet& net_;
    std::vector<double> goal_features_;
    std::size_t n_;
    std::mt19937_64 rng_;
    AccessCounter counter_;
    Tensor z_;
};

SearchResult phil_search(const Graph& graph, NodeId start, NodeId goal, const HeuristicNet& net, std::size_t n,
                         std::uint64_t seed = 0, std::size_t budget = 0);

/// Walks parent links from goal back to start.
std::vector<NodeId> trace_path(const std::vector<NodeId>& parent, NodeId start, NodeId goal);

}  // namespace phil
