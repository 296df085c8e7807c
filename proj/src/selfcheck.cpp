#include "phil/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "phil/search.hpp"
#include "phil/training.hpp"
#include "phil/worlds.hpp"

namespace phil {

namespace {

Graph random_graph(std::mt19937_64& rng, std::size_t nodes, double p) {
    std::vector<double> features(nodes * 2);
    std::uniform_real_distribution<double> coord(0.0, 10.0);
    for (auto& f : features) f = coord(rng);
    std::vector<EdgeSpec> edges;
    std::bernoulli_distribution keep(p);
    for (std::size_t a = 0; a < nodes; ++a) {
        for (std::size_t b = a + 1; b < nodes; ++b) {
            if (keep(rng)) edges.push_back({NodeId(a), NodeId(b), {}});
        }
    }
    return Graph(nodes, 2, std::move(features), 0, edges);
}

Graph random_grid(std::mt19937_64& rng, int side, double density) {
    Occupancy occ(side, side, 1);
    std::bernoulli_distribution blocked(density);
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) occ.set(x, y, 0, blocked(rng));
    }
    occ.set(0, 0, 0, false);
    occ.set(side - 1, side - 1, 0, false);
    return grid_graph(occ, 4);
}

CheckResult check_gradients(std::uint64_t seed) {
    CheckResult result{"gradient", true, ""};
    std::mt19937_64 rng(seed);
#ifdef PHIL_REAL_FLOAT
    const double eps = 1e-2, rtol = 5e-2, atol = 1e-3;
#else
    const double eps = 1e-6, rtol = 1e-4, atol = 1e-7;
#endif
    std::ostringstream detail;
    std::size_t compared = 0;
    double worst = 0.0;
    for (Aggregation agg : {Aggregation::Sum, Aggregation::Mean, Aggregation::Max, Aggregation::Softmax}) {
        Graph g = random_grid(rng, 7, 0.2);
        ModelSpec spec;
        spec.mlp_depth = 2;
        spec.mlp_width = 6;
        spec.emb = 5;
        spec.memory = 3;
        spec.aggregation = agg;
        HeuristicNet net(spec, rng());
        net.set_target_scale(7.0);
        const NodeId start = 0, goal = NodeId(g.node_count() - 1);
        DistanceField field = distances_from(g, goal);
        if (h_star(field, start) == DistanceField::kUnreachable) continue;
        Trajectory traj = collect_trajectory(g, start, goal, net, field, 0.5, 2, 4, {3, InitStateMode::RolledIn}, rng);
        if (traj.degenerate()) continue;

        for (auto& p : net.parameter_list()) p.zero_grad();
        {
            Tape tape;
            TapeScope scope(tape);
            Tensor loss = tbtt_loss(net, traj);
            tape.backward(loss);
        }
        for (auto& [name, param] : net.parameters()) {
            std::vector<Real> analytic(param.grad().begin(), param.grad().end());
            if (analytic.empty()) analytic.assign(param.size(), Real(0));
            std::uniform_int_distribution<std::size_t> pick(0, param.size() - 1);
            for (int k = 0; k < 3; ++k) {
                const std::size_t i = pick(rng);
                const Real saved = param.data()[i];
                param.mutable_data()[i] = Real(saved + eps);
                const double up = tbtt_loss(net, traj).item();
                param.mutable_data()[i] = Real(saved - eps);
                const double down = tbtt_loss(net, traj).item();
                param.mutable_data()[i] = saved;
                const double numeric = (up - down) / (2 * eps);
                const double err = std::abs(numeric - analytic[i]);
                const double bound = atol + rtol * std::max(std::abs(numeric), std::abs(double(analytic[i])));
                worst = std::max(worst, err / bound);
                ++compared;
                if (err > bound && result.passed) {
                    result.passed = false;
                    detail << to_string(agg) << ' ' << name << '[' << i << "]: analytic " << analytic[i]
                           << " numeric " << numeric << "; ";
                }
            }
        }
    }
    if (compared == 0) {
        result.passed = false;
        detail << "no parameters compared";
    }
    detail << compared << " entries, worst error/bound " << worst;
    result.detail = detail.str();
    return result;
}

CheckResult check_oracle(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    constexpr std::int64_t inf = std::numeric_limits<std::int32_t>::max();
    std::size_t pairs = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 5 + rng() % 20;
        Graph g = random_graph(rng, n, 0.15);
        std::vector<std::int64_t> d(n * n, inf);
        for (std::size_t v = 0; v < n; ++v) {
            d[v * n + v] = 0;
            for (NodeId u : g.neighbors(NodeId(v))) d[v * n + std::size_t(u)] = 1;
        }
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (d[i * n + k] < inf && d[k * n + j] < inf) d[i * n + j] = std::min(d[i * n + j], d[i * n + k] + d[k * n + j]);
                }
            }
        }
        for (std::size_t goal = 0; goal < n; ++goal) {
            DistanceField field = distances_from(g, NodeId(goal));
            for (std::size_t v = 0; v < n; ++v) {
                const std::int64_t got = h_star(field, NodeId(v));
                const std::int64_t want = d[v * n + goal] == inf ? std::int64_t(DistanceField::kUnreachable) : d[v * n + goal];
                ++pairs;
                if (got != want) {
                    return {"oracle", false, "trial " + std::to_string(trial) + " node " + std::to_string(v) + " goal " +
                                                 std::to_string(goal) + ": bfs " + std::to_string(got) + ", floyd-warshall " +
                                                 std::to_string(want)};
                }
            }
        }
    }
    return {"oracle", true, std::to_string(pairs) + " pairs agree"};
}

CheckResult check_partition_invariants(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> score(0.0, 1.0);
    std::size_t steps = 0;
    for (int trial = 0; trial < 20; ++trial) {
        Graph g = random_graph(rng, 10 + rng() % 30, 0.12);
        const NodeId start = NodeId(rng() % g.node_count());
        SearchState state = init_search(g, start);
        std::size_t expansions = 0;
        while (!state.queue().empty()) {
            const NodeId v = state.pop_open();
            ++expansions;
            for (NodeId u : expand(state, g, v)) state.enqueue(u, score(rng));
            ++steps;
            std::string err = check_partition(state, g, start);
            if (err.empty() && state.close_count() != expansions) err = "expansions differ from |CLOSE|";
            if (!err.empty()) return {"partition", false, "trial " + std::to_string(trial) + ": " + err};
        }
    }
    return {"partition", true, std::to_string(steps) + " expansions checked"};
}

CheckResult check_drivers(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (int trial = 0; trial < 10; ++trial) {
        Graph g = random_grid(rng, 8, 0.25);
        const NodeId start = 0, goal = NodeId(g.node_count() - 1);
        const std::int32_t dist = shortest_path_length(g, start, goal);
        const bool reachable = dist != DistanceField::kUnreachable;
        auto fail = [&](const std::string& what) {
            return CheckResult{"drivers", false, "trial " + std::to_string(trial) + ": " + what};
        };
        SearchResult b = bfs(g, start, goal);
        if (b.found != reachable || (reachable && b.path_length != dist)) return fail("bfs path is not shortest");
        SearchResult a = astar(g, start, goal, make_node_heuristic(g, goal, HeuristicKind::of(HeuristicTag::Manhattan)));
        if (a.found != reachable || (reachable && a.path_length != dist)) return fail("astar path is not shortest");
        if (best_first(g, start, goal, HeuristicKind::of(HeuristicTag::Euclidean)).found != reachable) return fail("greedy");
        if (mha_star(g, start, goal, default_mha_heuristics(g, goal)).found != reachable) return fail("mha");
        if (bfws(g, start, goal).found != reachable) return fail("bfws");
        if (!reachable) continue;
        SearchResult o = best_first(g, start, goal, HeuristicKind::of(HeuristicTag::Oracle));
        if (o.expansions != std::size_t(dist) + 1) return fail("oracle greedy is not minimal");

        ModelSpec spec;
        spec.mlp_width = 8;
        spec.emb = 8;
        spec.memory = 4;
        HeuristicNet net(spec, rng());
        for (Real& w : net.head_output().weight.mutable_data()) w = 0;
        for (Real& w : net.head_output().bias.mutable_data()) w = 0;
        SearchResult p = phil_search(g, start, goal, net, 4, rng());
        if (p.expansion_log != b.expansion_log) return fail("constant learned heuristic differs from bfs order");
    }
    return {"drivers", true, "completeness, optimality and tie order hold"};
}

}  // namespace

std::vector<CheckResult> run_selfcheck(std::uint64_t seed) {
    std::vector<CheckResult> out;
    auto guarded = [&](const char* name, auto&& fn) {
        try {
            out.push_back(fn());
        } catch (const std::exception& e) {
            out.push_back({name, false, std::string("exception: ") + e.what()});
        }
    };
    guarded("gradient", [&] { return check_gradients(instance_seed(seed, 1, 0)); });
    guarded("oracle", [&] { return check_oracle(instance_seed(seed, 2, 0)); });
    guarded("partition", [&] { return check_partition_invariants(instance_seed(seed, 3, 0)); });
    guarded("drivers", [&] { return check_drivers(instance_seed(seed, 4, 0)); });
    return out;
}

}  // namespace phil
