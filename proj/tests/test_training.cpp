#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "oracles.hpp"
#include "phil/oracle.hpp"
#include "phil/search.hpp"
#include "phil/training.hpp"
#include "phil/worlds.hpp"

using namespace phil;
using namespace phil::testing;
namespace fs = std::filesystem;

namespace {

ModelSpec tiny_spec(std::size_t edge_dim = 0) {
    ModelSpec s;
    s.edge_dim = edge_dim;
    s.mlp_depth = 2;
    s.mlp_width = 8;
    s.emb = 6;
    s.memory = 4;
    return s;
}

HeuristicNet constant_net(double value) {
    HeuristicNet net(tiny_spec(), 1);
    Linear& out = net.head_output();
    std::fill(out.weight.mutable_data().begin(), out.weight.mutable_data().end(), Real(0));
    out.bias.mutable_data()[0] = Real(value);
    return net;
}

Observation lone_node(double x, double y) {
    Observation o;
    o.node = 0;
    o.features = {x, y};
    return o;
}

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.N = 3;
    cfg.m = 2;
    cfg.T = 24;
    cfg.t_tau = 6;
    cfg.mlp_depth = 2;
    cfg.mlp_width = 12;
    cfg.emb = 8;
    cfg.memory = 6;
    cfg.epochs = 1;
    cfg.batch = 2;
    cfg.val_problems = 2;
    cfg.seed = 5;
    return cfg;
}

struct SmallDataset {
    fs::path dir;
    SplitData train, val;
    explicit SmallDataset(const WorldSpec& spec, const std::string& name) : dir(fs::temp_directory_path() / name) {
        fs::remove_all(dir);
        generate_dataset(spec, dir);
        train = load_split(dir / "train");
        val = load_split(dir / "val");
    }
    ~SmallDataset() { fs::remove_all(dir); }
};

WorldSpec small_world(WorldFamily family) {
    WorldSpec spec;
    spec.family = family;
    spec.width = 16;
    spec.height = 16;
    spec.train = 4;
    spec.val = 2;
    spec.test = 1;
    spec.wall_spacing = 5;
    return spec;
}

const SmallDataset& dataset() {
    static SmallDataset ds(small_world(WorldFamily::AlternatingGaps), "phil_training_ds");
    return ds;
}

const SmallDataset& forest() {
    static SmallDataset ds(
        [] {
            WorldSpec spec = small_world(WorldFamily::Forest);
            spec.policy = StartGoalPolicy::UniformRandom;
            spec.problems_per_graph = 5;
            return spec;
        }(),
        "phil_training_forest");
    return ds;
}

}  // namespace

TEST_SUITE("training") {
    TEST_CASE("beta schedule") {
        CHECK(beta_schedule(0.7, 1) == doctest::Approx(0.7));
        CHECK(beta_schedule(0.7, 2) == doctest::Approx(0.49));
        CHECK(beta_schedule(0.7, 5) == doctest::Approx(0.16807));
    }

    TEST_CASE("loss arithmetic: zero prediction against scaled target 2 gives 4") {
        HeuristicNet net = constant_net(0.0);
        net.set_target_scale(10.0);
        Trajectory tr;
        tr.initial_z = net.zero_memory();
        tr.goal_features = {5, 5};
        tr.steps.push_back({{lone_node(1, 1)}, {20.0}});
        CHECK(double(tbtt_loss(net, tr).item()) == doctest::Approx(4.0));
    }

    TEST_CASE("perfect predictions give zero loss and empty steps are skipped") {
        HeuristicNet net = constant_net(0.5);
        net.set_target_scale(8.0);
        Trajectory tr;
        tr.initial_z = net.zero_memory();
        tr.goal_features = {0, 0};
        tr.steps.push_back({{lone_node(1, 1), lone_node(2, 3)}, {4.0, 4.0}});
        tr.steps.push_back({});
        tr.steps.push_back({{lone_node(0, 1)}, {4.0}});
        CHECK(tr.label_count() == 3);
        CHECK(double(tbtt_loss(net, tr).item()) == 0.0);
        // Mean over non-empty steps of per-step means: ((0.25 + 0.25) / 2 + 1) / 2.
        tr.steps[2].targets = {12.0};
        tr.steps[0].targets = {0.0, 8.0};
        CHECK(double(tbtt_loss(net, tr).item()) == doctest::Approx((0.25 + 1.0) / 2));
    }

    TEST_CASE("three-step unrolled loss gradient matches finite differences") {
        std::mt19937_64 rng(14);
        Graph g = random_connected_graph(rng, 30, 0.1, 2, 1);
        HeuristicNet net(tiny_spec(1), 3);
        net.set_target_scale(5.0);
        Trajectory tr;
        tr.initial_z = random_tensor(rng, 1, 4, false);
        tr.goal_features = {1.0, -2.0};
        for (int step = 0; step < 3; ++step) {
            TrajectoryStep s;
            for (int i = 0; i < 1 + step; ++i) {
                s.observations.push_back(sample_neighborhood(g, NodeId(rng() % 30), 3, rng));
                s.targets.push_back(double(rng() % 9));
            }
            tr.steps.push_back(std::move(s));
        }
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            loss = tbtt_loss(net, tr);
        }
        tape.backward(loss);
        const bool dbl = sizeof(Real) == 8;
        for (const auto& [name, p] : net.parameters()) {
            auto numeric = numeric_gradient(p, [&] { return double(tbtt_loss(net, tr).item()); }, dbl ? 1e-6 : 1e-2);
            for (std::size_t i = 0; i < numeric.size(); ++i) {
                const double tg = p.has_grad() ? double(p.grad()[i]) : 0.0;
                INFO(name << "[" << i << "]");
                CHECK(close(tg, numeric[i], dbl ? 1e-4 : 5e-2, dbl ? 1e-8 : 1e-3));
            }
        }
    }

    TEST_CASE("beta one: the roll-out follows the oracle down the distance field") {
        std::mt19937_64 rng(3);
        HeuristicNet net(tiny_spec(), 2);
        for (int trial = 0; trial < 20; ++trial) {
            Graph g = random_connected_graph(rng, 40 + rng() % 40, 0.04);
            const NodeId s = NodeId(rng() % g.node_count()), t = NodeId(rng() % g.node_count());
            DistanceField field = distances_from(g, t);
            std::mt19937_64 crng(trial);
            Trajectory tr = collect_trajectory(g, s, t, net, field, 1.0, 0, 12, {}, crng);
            CHECK(tr.oracle_pops == tr.rollout_pops);
            int expected = field.dist[s] - 1;
            for (const auto& step : tr.steps) {
                if (expected < 0) break;
                REQUIRE_FALSE(step.targets.empty());
                CHECK(*std::min_element(step.targets.begin(), step.targets.end()) == double(expected));
                --expected;
            }
        }
    }

    TEST_CASE("beta zero with a constant head follows breadth-first order") {
        std::mt19937_64 rng(8);
        HeuristicNet net = constant_net(0.1);
        for (int trial = 0; trial < 10; ++trial) {
            Graph g = random_connected_graph(rng, 50, 0.05);
            const NodeId s = NodeId(rng() % 50), t = NodeId(rng() % 50);
            DistanceField field = distances_from(g, t);
            std::mt19937_64 crng(trial);
            Trajectory tr = collect_trajectory(g, s, t, net, field, 0.0, 0, 10, {}, crng);
            CHECK(tr.oracle_pops == 0);
            // Replay breadth-first expansion to obtain its V_new sequence.
            SearchState state = init_search(g, s);
            std::vector<std::vector<NodeId>> expected;
            for (NodeId v = state.pop_open(); v >= 0 && expected.size() < tr.steps.size(); v = state.pop_open()) {
                auto fresh = expand(state, g, v);
                for (NodeId u : fresh) state.enqueue(u, 0.0);
                expected.push_back(fresh);
            }
            REQUIRE(expected.size() == tr.steps.size());
            for (std::size_t k = 0; k < tr.steps.size(); ++k) {
                std::vector<NodeId> got;
                for (const auto& o : tr.steps[k].observations) got.push_back(o.node);
                CHECK(got == expected[k]);
                for (std::size_t i = 0; i < got.size(); ++i) CHECK(tr.steps[k].targets[i] == double(field.dist[got[i]]));
            }
        }
    }

    TEST_CASE("initial memory: zero without roll-in, differs between modes with roll-in") {
        std::mt19937_64 rng(2);
        Graph g = grid_graph(Occupancy(12, 12, 1), 4);
        HeuristicNet net(tiny_spec(), 9);
        DistanceField field = distances_from(g, 143);
        for (InitStateMode mode : {InitStateMode::RolledIn, InitStateMode::Zeroed}) {
            std::mt19937_64 crng(1);
            Trajectory tr = collect_trajectory(g, 0, 143, net, field, 0.5, 0, 5, {4, mode}, crng);
            for (Real v : tr.initial_z.data()) CHECK(v == Real(0));
        }
        std::mt19937_64 r1(1), r2(1);
        Trajectory rolled = collect_trajectory(g, 0, 143, net, field, 0.5, 7, 5, {4, InitStateMode::RolledIn}, r1);
        Trajectory zeroed = collect_trajectory(g, 0, 143, net, field, 0.5, 7, 5, {4, InitStateMode::Zeroed}, r2);
        CHECK(rolled.rollin == 7);
        bool nonzero = false;
        for (Real v : rolled.initial_z.data()) nonzero |= v != Real(0);
        CHECK(nonzero);
        for (Real v : zeroed.initial_z.data()) CHECK(v == Real(0));
        CHECK(rolled.label_count() == zeroed.label_count());
    }

    TEST_CASE("the roll-out continues past the goal until t_tau steps") {
        Graph g = grid_graph(Occupancy(10, 10, 1), 4);
        HeuristicNet net(tiny_spec(), 2);
        DistanceField field = distances_from(g, 1);
        std::mt19937_64 rng(0);
        Trajectory tr = collect_trajectory(g, 0, 1, net, field, 1.0, 0, 8, {}, rng);
        CHECK(tr.steps.size() == 8);
        Graph tiny = path_graph(3);
        DistanceField f3 = distances_from(tiny, 2);
        Trajectory exhausted = collect_trajectory(tiny, 0, 2, net, f3, 1.0, 0, 8, {}, rng);
        CHECK(exhausted.steps.size() == 3);
    }

    TEST_CASE("mixture pops follow beta within three binomial deviations") {
        Graph g = grid_graph(Occupancy(30, 30, 1), 4);
        HeuristicNet net(tiny_spec(), 4);
        DistanceField field = distances_from(g, 899);
        std::mt19937_64 rng(77);
        const double beta = 0.3;
        std::size_t oracle = 0, total = 0;
        for (int i = 0; i < 40; ++i) {
            Trajectory tr = collect_trajectory(g, 0, 899, net, field, beta, i % 10, 32, {}, rng);
            oracle += tr.oracle_pops;
            total += tr.rollout_pops;
        }
        const double sigma = std::sqrt(beta * (1 - beta) / double(total));
        CHECK(std::abs(double(oracle) / double(total) - beta) <= 3 * sigma);
    }

    TEST_CASE("train config json is strict and validated") {
        TrainConfig cfg;
        auto j = config_to_json(cfg);
        CHECK(config_to_json(config_from_json(j)) == j);
        j["learning_rate"] = 0.1;
        CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("learning_rate"), std::invalid_argument);
        TrainConfig bad = cfg;
        bad.t_tau = bad.T + 1;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.beta0 = 1.0;
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        SlConfig sl;
        auto sj = sl_config_to_json(sl);
        sj["depthh"] = 3;
        CHECK_THROWS_AS(sl_config_from_json(sj), std::invalid_argument);
    }

    TEST_CASE("single iteration smoke run") {
        TrainConfig cfg = tiny_train_config();
        cfg.N = 1;
        cfg.m = 1;
        int callbacks = 0;
        TrainResult r = train(dataset().train, dataset().val, cfg, [&](const TrainLogRow&, const HeuristicNet&) { ++callbacks; });
        REQUIRE(r.log.size() == 2);
        CHECK(r.log[1].dataset_size == 1);
        CHECK(callbacks == 2);
        CHECK(r.best_val_expansions <= r.log[0].val_expansions);
    }

    TEST_CASE("aggregation grows by m per iteration and training is deterministic") {
        TrainConfig cfg = tiny_train_config();
        TrainResult a = train(dataset().train, dataset().val, cfg);
        TrainResult b = train(dataset().train, dataset().val, cfg);
        REQUIRE(a.log.size() == std::size_t(cfg.N + 1));
        for (int i = 0; i <= cfg.N; ++i) {
            CHECK(a.log[std::size_t(i)].iteration == i);
            CHECK(a.log[std::size_t(i)].dataset_size == std::size_t(i * cfg.m));
            if (i > 0) CHECK(a.log[std::size_t(i)].beta == doctest::Approx(beta_schedule(cfg.beta0, i)));
        }
        CHECK(model_to_json(a.best).dump() == model_to_json(b.best).dump());
        CHECK(a.best_iteration == b.best_iteration);
        std::ostringstream la, lb;
        write_train_log_csv(a.log, la);
        write_train_log_csv(b.log, lb);
        CHECK(la.str() == lb.str());
        CHECK(la.str().rfind("iteration,beta,loss,val_expansions", 0) == 0);
        double best = a.log[0].val_expansions;
        for (const auto& row : a.log) best = std::min(best, row.val_expansions);
        CHECK(a.best_val_expansions == best);
    }

    TEST_CASE("oracle labels stay under N * m * t_tau * 8 on 8-connected grids") {
        fs::path dir = fs::temp_directory_path() / "phil_training_8c";
        fs::remove_all(dir);
        WorldSpec spec;
        spec.family = WorldFamily::Forest;
        spec.width = 16;
        spec.height = 16;
        spec.connectivity = 8;
        spec.train = 3;
        spec.val = 1;
        spec.test = 1;
        generate_dataset(spec, dir);
        TrainConfig cfg = tiny_train_config();
        cfg.N = 4;
        cfg.m = 1;
        cfg.t_tau = 8;
        cfg.val_problems = 1;
        TrainResult r = train(dir, cfg);
        CHECK(r.labels > 0);
        CHECK(r.labels <= std::size_t(cfg.N * cfg.m * cfg.t_tau * 8));
        fs::remove_all(dir);
    }

    TEST_CASE("supervised baseline: near-zero self distance, deterministic, complete") {
        SlConfig cfg;
        cfg.depth = 3;
        cfg.width = 32;
        cfg.steps = 1500;
        cfg.seed = 2;
        DistanceMlp uniform = train_sl_baseline(forest().train, StartGoalPolicy::UniformRandom, cfg);
        const Graph& fg = forest().train.graphs[0];
        for (NodeId v = 0; v < NodeId(fg.node_count()); v += 7) {
            CHECK(std::abs(uniform.predict(fg.features(v), fg.features(v))) <= 0.1 * uniform.target_scale());
        }
        const Graph& g = dataset().train.graphs[0];
        DistanceMlp a = train_sl_baseline(dataset().train, StartGoalPolicy::FixedCorners, cfg);
        DistanceMlp b = train_sl_baseline(dataset().train, StartGoalPolicy::FixedCorners, cfg);
        const NodeId corner = dataset().train.problems[0].goal;
        CHECK(std::abs(a.predict(g.features(corner), g.features(corner))) <= 0.1 * a.target_scale());
        for (NodeId v = 0; v < NodeId(g.node_count()); v += 7) {
            CHECK(a.predict(g.features(v), g.features(corner)) == b.predict(g.features(v), g.features(corner)));
        }
        auto model = std::make_shared<const DistanceMlp>(a);
        for (const auto& p : dataset().val.problems) {
            const Graph& vg = dataset().val.graphs[dataset().val.graph_index(p)];
            HeuristicKind kind{HeuristicTag::DistanceModel, nullptr, model};
            SearchResult r = best_first(vg, p.start, p.goal, make_node_heuristic(vg, p.goal, kind));
            CHECK(r.found);
        }
    }
}
