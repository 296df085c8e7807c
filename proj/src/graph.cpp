#include "phil/graph.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace phil {

Graph::Graph(std::size_t node_count, std::size_t node_dim, std::vector<double> node_features,
             std::size_t edge_dim, const std::vector<EdgeSpec>& edges,
             std::map<std::string, std::string> metadata)
    : node_count_(node_count),
      node_dim_(node_dim),
      edge_dim_(edge_dim),
      edge_count_(edges.size()),
      node_features_(std::move(node_features)),
      metadata_(std::move(metadata)) {
    if (node_dim_ == 0) throw std::invalid_argument("graph: node feature width must be >= 1");
    if (node_features_.size() != node_count_ * node_dim_) {
        throw std::invalid_argument("graph: expected " + std::to_string(node_count_ * node_dim_) +
                                    " node feature values, got " + std::to_string(node_features_.size()));
    }

    std::vector<std::size_t> degree(node_count_, 0);
    std::set<std::pair<NodeId, NodeId>> seen;
    edge_ends_.reserve(edges.size());
    edge_features_.reserve(edges.size() * edge_dim_);
    for (const auto& e : edges) {
        if (!valid(e.a) || !valid(e.b)) {
            throw std::invalid_argument("graph: edge (" + std::to_string(e.a) + ", " + std::to_string(e.b) +
                                        ") references a node outside [0, " + std::to_string(node_count_) + ")");
        }
        if (e.a == e.b) throw std::invalid_argument("graph: self-loop on node " + std::to_string(e.a));
        auto key = std::minmax(e.a, e.b);
        if (!seen.insert(key).second) {
            throw std::invalid_argument("graph: duplicate edge (" + std::to_string(key.first) + ", " +
                                        std::to_string(key.second) + ")");
        }
        if (e.features.size() != edge_dim_) {
            throw std::invalid_argument("graph: edge (" + std::to_string(e.a) + ", " + std::to_string(e.b) +
                                        ") has " + std::to_string(e.features.size()) + " features, expected " +
                                        std::to_string(edge_dim_));
        }
        edge_ends_.emplace_back(e.a, e.b);
        edge_features_.insert(edge_features_.end(), e.features.begin(), e.features.end());
        ++degree[e.a];
        ++degree[e.b];
    }

    offsets_.assign(node_count_ + 1, 0);
    for (std::size_t v = 0; v < node_count_; ++v) offsets_[v + 1] = offsets_[v] + degree[v];
    adjacency_.resize(offsets_.back());
    adjacency_edge_.resize(offsets_.back());
    std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t k = 0; k < edge_ends_.size(); ++k) {
        auto [a, b] = edge_ends_[k];
        adjacency_[cursor[a]] = b;
        adjacency_edge_[cursor[a]++] = k;
        adjacency_[cursor[b]] = a;
        adjacency_edge_[cursor[b]++] = k;
    }
}

std::int64_t Graph::edge_index(NodeId a, NodeId b) const {
    if (!valid(a) || !valid(b)) return -1;
    for (std::size_t k = offsets_[a]; k < offsets_[a + 1]; ++k) {
        if (adjacency_[k] == b) return static_cast<std::int64_t>(adjacency_edge_[k]);
    }
    return -1;
}

std::span<const double> Graph::edge_features(NodeId a, NodeId b) const {
    auto k = edge_index(a, b);
    if (k < 0) throw std::out_of_range("graph: (" + std::to_string(a) + ", " + std::to_string(b) + ") is not an edge");
    return edge_features_at(static_cast<std::size_t>(k));
}

std::string Graph::meta(const std::string& key, const std::string& fallback) const {
    auto it = metadata_.find(key);
    return it == metadata_.end() ? fallback : it->second;
}

std::vector<std::pair<double, double>> Graph::feature_bounds() const {
    std::vector<std::pair<double, double>> bounds(node_dim_, {std::numeric_limits<double>::infinity(),
                                                              -std::numeric_limits<double>::infinity()});
    for (std::size_t v = 0; v < node_count_; ++v) {
        for (std::size_t d = 0; d < node_dim_; ++d) {
            double x = node_features_[v * node_dim_ + d];
            bounds[d].first = std::min(bounds[d].first, x);
            bounds[d].second = std::max(bounds[d].second, x);
        }
    }
    return bounds;
}

std::vector<EdgeSpec> Graph::edge_list() const {
    std::vector<EdgeSpec> out;
    out.reserve(edge_ends_.size());
    for (std::size_t k = 0; k < edge_ends_.size(); ++k) {
        auto f = edge_features_at(k);
        out.push_back({edge_ends_[k].first, edge_ends_[k].second, {f.begin(), f.end()}});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Text format

void save_graph_text(const Graph& graph, std::ostream& out) {
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    out << "nodes " << graph.node_count() << " dv " << graph.node_dim() << " de " << graph.edge_dim() << '\n';
    for (std::size_t v = 0; v < graph.node_count(); ++v) {
        auto f = graph.features(static_cast<NodeId>(v));
        for (std::size_t d = 0; d < f.size(); ++d) out << (d ? " " : "") << f[d];
        out << '\n';
    }
    for (const auto& e : graph.edge_list()) {
        out << e.a << ' ' << e.b;
        for (double x : e.features) out << ' ' << x;
        out << '\n';
    }
}

namespace {

bool blank(const std::string& line) {
    return line.find_first_not_of(" \t\r") == std::string::npos;
}

std::vector<double> parse_reals(const std::string& line, int line_no) {
    std::istringstream ss(line);
    std::vector<double> values;
    std::string tok;
    while (ss >> tok) {
        try {
            std::size_t used = 0;
            double x = std::stod(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            values.push_back(x);
        } catch (const std::exception&) {
            throw ParseError("expected a real number, got '" + tok + "'", line_no);
        }
    }
    return values;
}

}  // namespace

Graph parse_graph_text(std::istream& in) {
    std::string line;
    int line_no = 0;
    auto next_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (!blank(line) && line[line.find_first_not_of(" \t")] != '#') return true;
        }
        return false;
    };

    if (!next_line()) throw ParseError("empty graph file", 1);
    std::size_t n = 0, dv = 0, de = 0;
    {
        std::istringstream ss(line);
        std::string k1, k2, k3, extra;
        long long nn = -1, ddv = -1, dde = -1;
        if (!(ss >> k1 >> nn >> k2 >> ddv >> k3 >> dde) || k1 != "nodes" || k2 != "dv" || k3 != "de" ||
            (ss >> extra) || nn < 0 || ddv < 1 || dde < 0) {
            throw ParseError("malformed header, expected 'nodes <N> dv <Dv> de <De>'", line_no);
        }
        n = static_cast<std::size_t>(nn);
        dv = static_cast<std::size_t>(ddv);
        de = static_cast<std::size_t>(dde);
    }

    std::vector<double> features;
    features.reserve(n * dv);
    for (std::size_t v = 0; v < n; ++v) {
        if (!next_line()) throw ParseError("missing feature row for node " + std::to_string(v), line_no + 1);
        auto row = parse_reals(line, line_no);
        if (row.size() != dv) {
            throw ParseError("node " + std::to_string(v) + " has " + std::to_string(row.size()) +
                                 " features, expected " + std::to_string(dv),
                             line_no);
        }
        features.insert(features.end(), row.begin(), row.end());
    }

    std::vector<EdgeSpec> edges;
    std::set<std::pair<NodeId, NodeId>> seen;
    while (next_line()) {
        std::istringstream ss(line);
        long long a = -1, b = -1;
        if (!(ss >> a >> b)) throw ParseError("malformed edge line", line_no);
        std::string rest;
        std::getline(ss, rest);
        auto ef = parse_reals(rest, line_no);
        if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= n || static_cast<std::size_t>(b) >= n) {
            throw ParseError("edge endpoint out of range", line_no);
        }
        if (a == b) throw ParseError("self-loop on node " + std::to_string(a), line_no);
        if (ef.size() != de) {
            throw ParseError("edge has " + std::to_string(ef.size()) + " features, expected " + std::to_string(de),
                             line_no);
        }
        const std::pair<NodeId, NodeId> key{static_cast<NodeId>(std::min(a, b)), static_cast<NodeId>(std::max(a, b))};
        if (!seen.insert(key).second) {
            throw ParseError("duplicate edge (" + std::to_string(key.first) + ", " + std::to_string(key.second) + ")",
                             line_no);
        }
        edges.push_back({static_cast<NodeId>(a), static_cast<NodeId>(b), std::move(ef)});
    }
    return Graph(n, dv, std::move(features), de, edges);
}

void save_graph(const Graph& graph, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    save_graph_text(graph, out);
    if (!graph.metadata().empty()) {
        auto sidecar = path;
        sidecar.replace_extension(".json");
        std::ofstream meta(sidecar);
        meta << nlohmann::json(graph.metadata()).dump(2) << '\n';
    }
}

Graph load_graph(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    Graph g = parse_graph_text(in);
    auto sidecar = path;
    sidecar.replace_extension(".json");
    if (sidecar != path && std::filesystem::exists(sidecar)) {
        std::ifstream meta(sidecar);
        auto j = nlohmann::json::parse(meta, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ParseError("malformed metadata sidecar " + sidecar.string(), 0);
        std::map<std::string, std::string> m;
        for (auto& [k, v] : j.items()) m[k] = v.is_string() ? v.get<std::string>() : v.dump();
        g.set_metadata(std::move(m));
    }
    return g;
}

// ---------------------------------------------------------------------------
// Fringe queue and partition

void FringeQueue::push(NodeId node, double score, std::uint64_t tiebreak) {
    heap_.push_back({score, tiebreak, node});
    std::push_heap(heap_.begin(), heap_.end(), QueueEntryAfter{});
}

QueueEntry FringeQueue::pop() {
    std::pop_heap(heap_.begin(), heap_.end(), QueueEntryAfter{});
    QueueEntry e = heap_.back();
    heap_.pop_back();
    return e;
}

void SearchState::enqueue(NodeId node, double score) {
    if (queued_[node]) throw std::logic_error("node " + std::to_string(node) + " was already scored");
    queued_[node] = 1;
    queue_.push(node, score, insertion_counter_++);
}

NodeId SearchState::pop_open() {
    while (!queue_.empty()) {
        auto e = queue_.pop();
        if (status_[e.node] == NodeStatus::Open) return e.node;
    }
    return -1;
}

void SearchState::mark_open(NodeId v) {
    if (status_[v] != NodeStatus::Rest) throw std::logic_error("node " + std::to_string(v) + " is not REST");
    status_[v] = NodeStatus::Open;
    ++open_count_;
}

SearchState init_search(const Graph& graph, NodeId start) {
    if (!graph.valid(start)) throw std::out_of_range("init_search: invalid start node " + std::to_string(start));
    SearchState s(graph.node_count());
    s.mark_open(start);
    s.enqueue(start, 0.0);
    return s;
}

std::vector<NodeId> expand(SearchState& state, const Graph& graph, NodeId node) {
    if (!graph.valid(node) || state.status_[node] != NodeStatus::Open) {
        throw std::logic_error("expand: node " + std::to_string(node) + " is not OPEN");
    }
    state.status_[node] = NodeStatus::Close;
    --state.open_count_;
    ++state.close_count_;
    std::vector<NodeId> fresh;
    for (NodeId w : graph.neighbors(node)) {
        if (state.status_[w] == NodeStatus::Rest) {
            state.status_[w] = NodeStatus::Open;
            ++state.open_count_;
            state.parent_[w] = node;
            fresh.push_back(w);
        }
    }
    return fresh;
}

std::string check_partition(const SearchState& state, const Graph& graph, NodeId start) {
    std::size_t close = 0, open = 0;
    for (std::size_t v = 0; v < state.node_count(); ++v) {
        auto s = state.status(static_cast<NodeId>(v));
        if (s == NodeStatus::Close) ++close;
        if (s == NodeStatus::Open) {
            ++open;
            if (static_cast<NodeId>(v) == start && state.close_count() == 0) continue;
            bool has_close = false;
            for (NodeId w : graph.neighbors(static_cast<NodeId>(v))) has_close |= state.status(w) == NodeStatus::Close;
            if (!has_close) return "OPEN node " + std::to_string(v) + " has no CLOSE neighbor";
        }
    }
    if (close != state.close_count()) return "close_count mismatch";
    if (open != state.open_count()) return "open_count mismatch";
    if (state.close_count() > 0 && state.status(start) != NodeStatus::Close) return "start is not CLOSE";
    return {};
}

Observation sample_neighborhood(const Graph& graph, NodeId node, std::size_t n, std::mt19937_64& rng,
                                AccessCounter* counter) {
    Observation obs;
    obs.node = node;
    auto f = graph.features(node);
    obs.features.assign(f.begin(), f.end());

    auto nbrs = graph.neighbors(node);
    std::vector<NodeId> pool(nbrs.begin(), nbrs.end());
    std::size_t k = std::min(n, pool.size());
    // partial Fisher-Yates: the first k slots are a uniform k-subset
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    obs.neighbors.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    obs.neighbor_features.reserve(k * graph.node_dim());
    obs.edge_features.reserve(k * graph.edge_dim());
    for (NodeId j : obs.neighbors) {
        auto xj = graph.features(j);
        obs.neighbor_features.insert(obs.neighbor_features.end(), xj.begin(), xj.end());
        auto e = graph.edge_features(node, j);
        obs.edge_features.insert(obs.edge_features.end(), e.begin(), e.end());
    }
    if (counter) counter->neighbor_feature_reads += k;
    return obs;
}

}  // namespace phil
