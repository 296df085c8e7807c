#include "phil/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <queue>
#include <stdexcept>

#include "phil/worlds.hpp"

namespace phil {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_endpoints(const Graph& graph, NodeId start, NodeId goal) {
    if (!graph.valid(start)) throw std::out_of_range("search: invalid start node " + std::to_string(start));
    if (!graph.valid(goal)) throw std::out_of_range("search: invalid goal node " + std::to_string(goal));
}

template <typename ParentFn>
std::vector<NodeId> walk_parents(ParentFn parent, NodeId start, NodeId goal, std::size_t limit) {
    std::vector<NodeId> path{goal};
    for (NodeId v = goal; v != start;) {
        v = parent(v);
        if (v < 0 || path.size() > limit) throw std::logic_error("search: broken parent chain");
        path.push_back(v);
    }
    std::reverse(path.begin(), path.end());
    return path;
}

void finish(SearchResult& r, std::vector<NodeId> path) {
    r.found = true;
    r.path_length = static_cast<std::int64_t>(path.size()) - 1;
    r.path = std::move(path);
}

using ExpansionHook = std::function<void(SearchResult&, std::span<const NodeId>)>;

SearchResult best_first_impl(const Graph& graph, NodeId start, NodeId goal, const BatchScorer& scorer,
                             std::size_t budget, const ExpansionHook& hook) {
    check_endpoints(graph, start, goal);
    const auto t0 = Clock::now();
    if (budget == 0) budget = graph.node_count();
    SearchResult r;
    SearchState state = init_search(graph, start);
    std::vector<double> scores;
    while (r.expansions < budget) {
        const NodeId v = state.pop_open();
        if (v < 0) break;
        std::vector<NodeId> fresh = expand(state, graph, v);
        r.expansion_log.push_back(v);
        ++r.expansions;
        if (v == goal) {
            if (hook) hook(r, {});
            finish(r, walk_parents([&](NodeId u) { return state.parent(u); }, start, goal, graph.node_count()));
            break;
        }
        if (!fresh.empty()) {
            scores.assign(fresh.size(), 0.0);
            scorer(fresh, scores);
            for (std::size_t i = 0; i < fresh.size(); ++i) state.enqueue(fresh[i], scores[i]);
        }
        if (hook) hook(r, fresh);
    }
    r.wall_time = seconds_since(t0);
    return r;
}

double feature_distance(std::span<const double> a, std::span<const double> b, HeuristicTag tag) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::abs(a[i] - b[i]);
        switch (tag) {
            case HeuristicTag::Euclidean: acc += d * d; break;
            case HeuristicTag::Manhattan: acc += d; break;
            case HeuristicTag::Chebyshev: acc = std::max(acc, d); break;
            default: break;
        }
    }
    return tag == HeuristicTag::Euclidean ? std::sqrt(acc) : acc;
}

}  // namespace

std::string to_string(HeuristicTag tag) {
    switch (tag) {
        case HeuristicTag::Euclidean: return "euclidean";
        case HeuristicTag::Manhattan: return "manhattan";
        case HeuristicTag::Chebyshev: return "chebyshev";
        case HeuristicTag::Zero: return "zero";
        case HeuristicTag::Oracle: return "oracle";
        case HeuristicTag::Learned: return "learned";
        case HeuristicTag::DistanceModel: return "distance_model";
    }
    return "?";
}

std::vector<NodeId> trace_path(const std::vector<NodeId>& parent, NodeId start, NodeId goal) {
    return walk_parents([&](NodeId v) { return parent[v]; }, start, goal, parent.size());
}

NodeHeuristic make_node_heuristic(const Graph& graph, NodeId goal, const HeuristicKind& kind,
                                  const DistanceField* oracle) {
    if (!graph.valid(goal)) throw std::out_of_range("heuristic: invalid goal node " + std::to_string(goal));
    const Graph* g = &graph;
    switch (kind.tag) {
        case HeuristicTag::Euclidean:
        case HeuristicTag::Manhattan:
        case HeuristicTag::Chebyshev: {
            const auto tag = kind.tag;
            return [g, goal, tag](NodeId v) { return feature_distance(g->features(v), g->features(goal), tag); };
        }
        case HeuristicTag::Zero: return [](NodeId) { return 0.0; };
        case HeuristicTag::Oracle: {
            auto field = std::make_shared<DistanceField>(oracle ? *oracle : distances_from(graph, goal));
            if (field->goal != goal) throw std::invalid_argument("heuristic: oracle field belongs to another goal");
            return [field](NodeId v) {
                return field->reachable(v) ? static_cast<double>(field->dist[v])
                                           : std::numeric_limits<double>::infinity();
            };
        }
        case HeuristicTag::DistanceModel: {
            if (!kind.distance_model) throw std::invalid_argument("heuristic: distance model handle missing");
            if (kind.distance_model->spec().node_dim != graph.node_dim()) {
                throw std::invalid_argument("heuristic: distance model expects " +
                                            std::to_string(kind.distance_model->spec().node_dim) +
                                            " features, graph has " + std::to_string(graph.node_dim()));
            }
            auto model = kind.distance_model;
            return [g, goal, model](NodeId v) { return model->predict(g->features(v), g->features(goal)); };
        }
        case HeuristicTag::Learned:
            throw std::invalid_argument("heuristic: the learned heuristic scores batches; use phil_search");
    }
    throw std::invalid_argument("heuristic: unknown tag");
}

SearchResult best_first(const Graph& graph, NodeId start, NodeId goal, const BatchScorer& scorer,
                        std::size_t budget) {
    return best_first_impl(graph, start, goal, scorer, budget, nullptr);
}

SearchResult best_first(const Graph& graph, NodeId start, NodeId goal, const NodeHeuristic& h, std::size_t budget) {
    BatchScorer scorer = [&h](std::span<const NodeId> fresh, std::span<double> scores) {
        for (std::size_t i = 0; i < fresh.size(); ++i) scores[i] = h(fresh[i]);
    };
    return best_first_impl(graph, start, goal, scorer, budget, nullptr);
}

SearchResult best_first(const Graph& graph, NodeId start, NodeId goal, const HeuristicKind& kind,
                        std::size_t budget, std::size_t n, std::uint64_t seed) {
    if (kind.tag == HeuristicTag::Learned) {
        if (!kind.net) throw std::invalid_argument("heuristic: learned model handle missing");
        return phil_search(graph, start, goal, *kind.net, n, seed, budget);
    }
    check_endpoints(graph, start, goal);
    return best_first(graph, start, goal, make_node_heuristic(graph, goal, kind), budget);
}

SearchResult bfs(const Graph& graph, NodeId start, NodeId goal, std::size_t budget) {
    return best_first(graph, start, goal, NodeHeuristic([](NodeId) { return 0.0; }), budget);
}

SearchResult astar(const Graph& graph, NodeId start, NodeId goal, const NodeHeuristic& h, std::size_t budget) {
    check_endpoints(graph, start, goal);
    const auto t0 = Clock::now();
    if (budget == 0) budget = graph.node_count();
    const std::size_t N = graph.node_count();
    constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();
    std::vector<std::int64_t> g(N, kInf);
    std::vector<double> hv(N, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::uint8_t> closed(N, 0);
    std::vector<NodeId> parent(N, -1);
    auto h_of = [&](NodeId v) {
        if (std::isnan(hv[v])) hv[v] = h(v);
        return hv[v];
    };
    FringeQueue queue;
    std::uint64_t counter = 0;
    SearchResult r;
    g[start] = 0;
    queue.push(start, h_of(start), counter++);
    while (!queue.empty() && r.expansions < budget) {
        const NodeId v = queue.pop().node;
        if (closed[v]) continue;
        closed[v] = 1;
        r.expansion_log.push_back(v);
        ++r.expansions;
        if (v == goal) {
            finish(r, trace_path(parent, start, goal));
            break;
        }
        for (NodeId w : graph.neighbors(v)) {
            if (closed[w]) continue;
            const std::int64_t ng = g[v] + 1;
            if (ng < g[w]) {
                g[w] = ng;
                parent[w] = v;
                queue.push(w, static_cast<double>(ng) + h_of(w), counter++);
            }
        }
    }
    r.wall_time = seconds_since(t0);
    return r;
}

std::vector<std::int32_t> obstacle_distance(const Graph& graph) {
    const GridInfo info = grid_info(graph);
    const std::size_t N = graph.node_count();
    std::vector<std::int32_t> dist(N, DistanceField::kUnreachable);
    std::vector<NodeId> frontier;
    std::vector<std::array<int, 3>> offsets;
    for (int dz = -1; dz <= 1; ++dz)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (manhattan == 0 || (!info.is_3d() && dz != 0)) continue;
                if (manhattan == 1 || (info.connectivity == 8 && manhattan == 2 && dz == 0)) offsets.push_back({dx, dy, dz});
            }
    for (NodeId v = 0; v < static_cast<NodeId>(N); ++v) {
        const auto c = grid_coords(graph, v);
        for (const auto& o : offsets) {
            const int x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
            const bool inside = x >= 0 && y >= 0 && z >= 0 && x < info.width && y < info.height && z < info.depth;
            if (inside && info.node_at(x, y, z) < 0) {
                dist[v] = 0;
                frontier.push_back(v);
                break;
            }
        }
    }
    for (std::size_t head = 0; head < frontier.size(); ++head) {
        const NodeId v = frontier[head];
        for (NodeId w : graph.neighbors(v)) {
            if (dist[w] == DistanceField::kUnreachable) {
                dist[w] = dist[v] + 1;
                frontier.push_back(w);
            }
        }
    }
    return dist;
}

std::vector<NodeHeuristic> default_mha_heuristics(const Graph& graph, NodeId goal) {
    auto dobs = std::make_shared<std::vector<std::int32_t>>(obstacle_distance(graph));
    return {make_node_heuristic(graph, goal, HeuristicKind::of(HeuristicTag::Euclidean)),
            make_node_heuristic(graph, goal, HeuristicKind::of(HeuristicTag::Manhattan)),
            [dobs](NodeId v) { return static_cast<double>((*dobs)[v]); }};
}

SearchResult mha_star(const Graph& graph, NodeId start, NodeId goal, const std::vector<NodeHeuristic>& heuristics,
                      std::size_t budget) {
    check_endpoints(graph, start, goal);
    if (heuristics.empty()) throw std::invalid_argument("mha_star: at least one heuristic is required");
    const auto t0 = Clock::now();
    if (budget == 0) budget = graph.node_count();
    const std::size_t H = heuristics.size();
    SearchState state(graph.node_count());
    state.mark_open(start);
    std::vector<FringeQueue> queues(H);
    std::uint64_t counter = 0;
    for (auto& q : queues) q.push(start, 0.0, counter);
    ++counter;
    SearchResult r;
    while (r.expansions < budget) {
        FringeQueue& q = queues[r.expansions % H];
        NodeId v = -1;
        while (!q.empty()) {
            const NodeId c = q.pop().node;
            if (state.status(c) == NodeStatus::Open) {
                v = c;
                break;
            }
        }
        if (v < 0) break;
        std::vector<NodeId> fresh = expand(state, graph, v);
        r.expansion_log.push_back(v);
        ++r.expansions;
        if (v == goal) {
            finish(r, walk_parents([&](NodeId u) { return state.parent(u); }, start, goal, graph.node_count()));
            break;
        }
        for (NodeId w : fresh) {
            for (std::size_t k = 0; k < H; ++k) queues[k].push(w, heuristics[k](w), counter);
            ++counter;
        }
    }
    r.wall_time = seconds_since(t0);
    return r;
}

SearchResult bfws(const Graph& graph, NodeId start, NodeId goal, std::size_t budget, const BfwsOptions& options) {
    check_endpoints(graph, start, goal);
    if (options.bins < 1) throw std::invalid_argument("bfws: bins must be >= 1");
    const auto t0 = Clock::now();
    if (budget == 0) budget = graph.node_count();
    const std::size_t D = graph.node_dim();
    const auto bounds = options.bounds.empty() ? graph.feature_bounds() : options.bounds;
    if (bounds.size() != D) throw std::invalid_argument("bfws: bounds do not match the feature width");
    const std::size_t B = static_cast<std::size_t>(options.bins);
    std::vector<std::uint8_t> seen(D * B, 0);
    auto novelty = [&](NodeId v) {
        auto x = graph.features(v);
        int result = 2;
        for (std::size_t d = 0; d < D; ++d) {
            const auto [lo, hi] = bounds[d];
            std::size_t bin = 0;
            if (hi > lo) {
                const double t = std::floor((x[d] - lo) / (hi - lo) * static_cast<double>(B));
                bin = static_cast<std::size_t>(std::clamp(t, 0.0, static_cast<double>(B - 1)));
            }
            if (!seen[d * B + bin]) {
                seen[d * B + bin] = 1;
                result = 1;
            }
        }
        return result;
    };

    struct Entry {
        int novelty;
        double h;
        std::uint64_t tiebreak;
        NodeId node;
        bool operator>(const Entry& o) const {
            if (novelty != o.novelty) return novelty > o.novelty;
            if (h != o.h) return h > o.h;
            return tiebreak > o.tiebreak;
        }
    };
    const NodeHeuristic h = make_node_heuristic(graph, goal, HeuristicKind::of(HeuristicTag::Euclidean));
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;
    SearchState state(graph.node_count());
    state.mark_open(start);
    std::uint64_t counter = 0;
    queue.push({novelty(start), h(start), counter++, start});
    SearchResult r;
    while (!queue.empty() && r.expansions < budget) {
        const NodeId v = queue.top().node;
        queue.pop();
        if (state.status(v) != NodeStatus::Open) continue;
        std::vector<NodeId> fresh = expand(state, graph, v);
        r.expansion_log.push_back(v);
        ++r.expansions;
        if (v == goal) {
            finish(r, walk_parents([&](NodeId u) { return state.parent(u); }, start, goal, graph.node_count()));
            break;
        }
        for (NodeId w : fresh) queue.push({novelty(w), h(w), counter++, w});
    }
    r.wall_time = seconds_since(t0);
    return r;
}

// ---------------------------------------------------------------------------
// Learned heuristic

PhilScorer::PhilScorer(const Graph& graph, const HeuristicNet& net, NodeId goal, std::size_t n, std::uint64_t seed)
    : graph_(graph), net_(net), n_(n), rng_(seed), z_(net.zero_memory()) {
    if (!graph.valid(goal)) throw std::out_of_range("phil: invalid goal node " + std::to_string(goal));
    if (net.spec().node_dim != graph.node_dim()) {
        throw std::invalid_argument("phil: model expects " + std::to_string(net.spec().node_dim) +
                                    " node features, graph has " + std::to_string(graph.node_dim()));
    }
    if (net.spec().edge_dim != graph.edge_dim()) {
        throw std::invalid_argument("phil: model expects " + std::to_string(net.spec().edge_dim) +
                                    " edge features, graph has " + std::to_string(graph.edge_dim()));
    }
    auto g = graph.features(goal);
    goal_features_.assign(g.begin(), g.end());
}

std::vector<Observation> PhilScorer::observe(std::span<const NodeId> fresh) {
    std::vector<Observation> obs;
    obs.reserve(fresh.size());
    for (NodeId v : fresh) obs.push_back(sample_neighborhood(graph_, v, n_, rng_, &counter_));
    return obs;
}

std::vector<double> PhilScorer::score(std::span<const Observation> observations) {
    ForwardOutput out = net_.forward(observations, goal_features_, z_);
    z_ = out.z_next.detach();
    std::vector<double> scores(observations.size());
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = static_cast<double>(out.h.at(i, 0)) * net_.target_scale();
    return scores;
}

void PhilScorer::operator()(std::span<const NodeId> fresh, std::span<double> scores) {
    auto obs = observe(fresh);
    auto s = score(obs);
    std::copy(s.begin(), s.end(), scores.begin());
}

SearchResult phil_search(const Graph& graph, NodeId start, NodeId goal, const HeuristicNet& net, std::size_t n,
                         std::uint64_t seed, std::size_t budget) {
    check_endpoints(graph, start, goal);
    PhilScorer scorer(graph, net, goal, n, seed);
    std::uint64_t reads_before = 0;
    ExpansionHook hook = [&](SearchResult& r, std::span<const NodeId> fresh) {
        r.neighbor_reads.push_back(static_cast<std::uint32_t>(scorer.neighbor_reads() - reads_before));
        r.new_nodes.push_back(static_cast<std::uint32_t>(fresh.size()));
        reads_before = scorer.neighbor_reads();
    };
    BatchScorer batch = [&](std::span<const NodeId> fresh, std::span<double> scores) { scorer(fresh, scores); };
    return best_first_impl(graph, start, goal, batch, budget, hook);
}

}  // namespace phil
