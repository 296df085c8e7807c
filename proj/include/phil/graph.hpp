#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace phil {

using NodeId = std::int32_t;

/// Raised by graph/world loaders; carries the 1-based line number when known.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, int line)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

struct EdgeSpec {
    NodeId a;
    NodeId b;
    std::vector<double> features;
};

/// Immutable undirected, unweighted graph in compressed adjacency form.
///
/// Both directions of every edge are materialized; each direction refers to the
/// same edge-feature row. Node features are stored row-major.
class Graph {
public:
    Graph() = default;

    /// Builds a graph from an undirected edge list. Rejects self-loops,
    /// duplicate edges (in either orientation) and out-of-range ids.
    Graph(std::size_t node_count, std::size_t node_dim, std::vector<double> node_features,
          std::size_t edge_dim, const std::vector<EdgeSpec>& edges,
          std::map<std::string, std::string> metadata = {});

    std::size_t node_count() const { return node_count_; }
    std::size_t edge_count() const { return edge_count_; }
    std::size_t node_dim() const { return node_dim_; }
    std::size_t edge_dim() const { return edge_dim_; }

    bool valid(NodeId v) const { return v >= 0 && static_cast<std::size_t>(v) < node_count_; }

    std::span<const NodeId> neighbors(NodeId v) const {
        return {adjacency_.data() + offsets_[v], adjacency_.data() + offsets_[v + 1]};
    }
    std::size_t degree(NodeId v) const { return offsets_[v + 1] - offsets_[v]; }

    std::span<const double> features(NodeId v) const {
        return {node_features_.data() + static_cast<std::size_t>(v) * node_dim_, node_dim_};
    }

    /// Edge feature row of (a, b); empty span when the graph has no edge features.
    /// Throws if (a, b) is not an edge. O(degree(a)).
    std::span<const double> edge_features(NodeId a, NodeId b) const;
    std::span<const double> edge_features_at(std::size_t edge_index) const {
        return {edge_features_.data() + edge_index * edge_dim_, edge_dim_};
    }
    /// Index of the undirected edge (a, b) or -1.
    std::int64_t edge_index(NodeId a, NodeId b) const;

    const std::vector<double>& node_feature_data() const { return node_features_; }
    const std::map<std::string, std::string>& metadata() const { return metadata_; }
    std::string meta(const std::string& key, const std::string& fallback = "") const;
    void set_metadata(std::map<std::string, std::string> metadata) { metadata_ = std::move(metadata); }

    /// Per-dimension [min, max] of the node features.
    std::vector<std::pair<double, double>> feature_bounds() const;

    /// Undirected edge list in canonical (a < b) order, as stored.
    std::vector<EdgeSpec> edge_list() const;

private:
    std::size_t node_count_ = 0;
    std::size_t node_dim_ = 0;
    std::size_t edge_dim_ = 0;
    std::size_t edge_count_ = 0;
    std::vector<std::size_t> offsets_{0};
    std::vector<NodeId> adjacency_;
    std::vector<std::size_t> adjacency_edge_;  // parallel to adjacency_
    std::vector<double> node_features_;
    std::vector<double> edge_features_;
    std::vector<std::pair<NodeId, NodeId>> edge_ends_;
    std::map<std::string, std::string> metadata_;
};

/// Text format: `nodes <N> dv <Dv> de <De>`, N feature lines, then `i j [De reals]`.
void save_graph_text(const Graph& graph, std::ostream& out);
Graph parse_graph_text(std::istream& in);

/// Writes `<path>` in the text format and, when metadata is present, a JSON sidecar
/// `<stem>.json` next to it.
void save_graph(const Graph& graph, const std::filesystem::path& path);
/// Loads a graph file plus its optional JSON metadata sidecar.
Graph load_graph(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Search partition

enum class NodeStatus : std::uint8_t { Rest = 0, Open = 1, Close = 2 };

struct QueueEntry {
    double score;
    std::uint64_t tiebreak;
    NodeId node;
};

/// Min-ordering on (score, insertion counter): lower score first, then earlier insertion.
struct QueueEntryAfter {
    bool operator()(const QueueEntry& a, const QueueEntry& b) const {
        if (a.score != b.score) return a.score > b.score;
        return a.tiebreak > b.tiebreak;
    }
};

/// Stable min-priority queue of scored fringe nodes.
class FringeQueue {
public:
    void push(NodeId node, double score, std::uint64_t tiebreak);
    QueueEntry pop();
    const QueueEntry& top() const { return heap_.front(); }
    bool empty() const { return heap_.empty(); }
    std::size_t size() const { return heap_.size(); }

private:
    std::vector<QueueEntry> heap_;
};

/// CLOSE / OPEN / REST partition of a graph during one search.
///
/// init_search() leaves the start node OPEN and queued so that its pop is the
/// first expansion; after that pop CLOSE = {start}.
class SearchState {
public:
    SearchState() = default;
    explicit SearchState(std::size_t node_count)
        : status_(node_count, NodeStatus::Rest), parent_(node_count, -1), queued_(node_count, 0) {}

    NodeStatus status(NodeId v) const { return status_[v]; }
    std::size_t close_count() const { return close_count_; }
    std::size_t open_count() const { return open_count_; }
    std::size_t node_count() const { return status_.size(); }
    std::uint64_t insertion_counter() const { return insertion_counter_; }

    FringeQueue& queue() { return queue_; }
    const FringeQueue& queue() const { return queue_; }

    /// Scores `node` once; it enters the queue and can never be re-scored.
    void enqueue(NodeId node, double score);
    /// Pops queue entries until a still-OPEN node is found; returns -1 when empty.
    NodeId pop_open();

    /// REST -> OPEN without queueing (used by drivers that keep their own queues).
    void mark_open(NodeId v);
    NodeId parent(NodeId v) const { return parent_.empty() ? -1 : parent_[v]; }

    friend std::vector<NodeId> expand(SearchState& state, const Graph& graph, NodeId node);
    friend SearchState init_search(const Graph& graph, NodeId start);

private:
    std::vector<NodeStatus> status_;
    std::vector<NodeId> parent_;
    std::vector<std::uint8_t> queued_;
    FringeQueue queue_;
    std::size_t close_count_ = 0;
    std::size_t open_count_ = 0;
    std::uint64_t insertion_counter_ = 0;
};

SearchState init_search(const Graph& graph, NodeId start);

/// Moves an OPEN node to CLOSE and returns its former REST neighbors (now OPEN),
/// in adjacency order. Throws std::logic_error if `node` is not OPEN.
std::vector<NodeId> expand(SearchState& state, const Graph& graph, NodeId node);

/// Checks the partition invariants; returns an empty string when they hold.
std::string check_partition(const SearchState& state, const Graph& graph, NodeId start);

// ---------------------------------------------------------------------------
// Observations

struct Observation {
    NodeId node = -1;
    std::vector<double> features;
    std::vector<NodeId> neighbors;
    std::vector<double> neighbor_features;  // neighbors.size() x Dv, row-major
    std::vector<double> edge_features;      // neighbors.size() x De, row-major
};

/// Counts neighbor-feature row reads; used to check the per-expansion work bound.
struct AccessCounter {
    std::uint64_t neighbor_feature_reads = 0;
};

/// Uniformly samples min(n, degree) distinct neighbors of `node`.
Observation sample_neighborhood(const Graph& graph, NodeId node, std::size_t n, std::mt19937_64& rng,
                                AccessCounter* counter = nullptr);

}  // namespace phil
