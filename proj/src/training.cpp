#include "phil/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>

#include "phil/json_io.hpp"
#include "phil/search.hpp"

namespace phil {

namespace {

// Oracle distance fields are reused across the many trajectories that share a goal.
class FieldCache {
public:
    const DistanceField& get(const SplitData& split, std::size_t graph, NodeId goal) {
        auto key = std::make_pair(graph, goal);
        auto it = fields_.find(key);
        if (it == fields_.end()) it = fields_.emplace(key, distances_from(split.graphs[graph], goal)).first;
        return it->second;
    }

private:
    std::map<std::pair<std::size_t, NodeId>, DistanceField> fields_;
};

NodeId pop_oracle(FringeQueue& queue, const SearchState& state) {
    while (!queue.empty()) {
        const NodeId v = queue.pop().node;
        if (state.status(v) == NodeStatus::Open) return v;
    }
    return -1;
}

}  // namespace

std::string to_string(InitStateMode m) { return m == InitStateMode::RolledIn ? "rolled_in" : "zeroed"; }

InitStateMode parse_init_state_mode(const std::string& name) {
    if (name == "rolled_in") return InitStateMode::RolledIn;
    if (name == "zeroed") return InitStateMode::Zeroed;
    throw std::invalid_argument("unknown init_state_mode '" + name + "' (expected rolled_in or zeroed)");
}

void TrainConfig::validate() const {
    if (!(t_tau > 0 && t_tau <= T)) throw std::invalid_argument("train config: need 0 < t_tau <= T");
    if (!(beta0 > 0 && beta0 < 1)) throw std::invalid_argument("train config: need 0 < beta0 < 1");
    if (N < 1 || m < 1) throw std::invalid_argument("train config: N and m must be >= 1");
    if (batch < 1 || epochs < 0) throw std::invalid_argument("train config: batch >= 1 and epochs >= 0 required");
    if (!(lr > 0)) throw std::invalid_argument("train config: lr must be positive");
    if (val_problems < 1) throw std::invalid_argument("train config: val_problems must be >= 1");
    if (target_scale < 0) throw std::invalid_argument("train config: target_scale must be >= 0");
    if (mlp_depth < 1 || mlp_width < 1 || emb < 1 || memory < 1) {
        throw std::invalid_argument("train config: architecture widths must be >= 1");
    }
}

nlohmann::ordered_json config_to_json(const TrainConfig& c) {
    return {
        {"T", c.T},
        {"t_tau", c.t_tau},
        {"beta0", c.beta0},
        {"N", c.N},
        {"m", c.m},
        {"n", c.n},
        {"init_state_mode", to_string(c.init_state)},
        {"lr", c.lr},
        {"batch", c.batch},
        {"epochs", c.epochs},
        {"seed", c.seed},
        {"val_problems", c.val_problems},
        {"target_scale", c.target_scale},
        {"budget", c.budget},
        {"mlp_depth", c.mlp_depth},
        {"mlp_width", c.mlp_width},
        {"emb", c.emb},
        {"memory", c.memory},
        {"aggregation", to_string(c.aggregation)},
    };
}

TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    reject_unknown_keys(j, key_set(config_to_json(c)), "train config");
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("T", c.T);
        get("t_tau", c.t_tau);
        get("beta0", c.beta0);
        get("N", c.N);
        get("m", c.m);
        get("n", c.n);
        if (j.contains("init_state_mode")) c.init_state = parse_init_state_mode(j.at("init_state_mode").get<std::string>());
        get("lr", c.lr);
        get("batch", c.batch);
        get("epochs", c.epochs);
        get("seed", c.seed);
        get("val_problems", c.val_problems);
        get("target_scale", c.target_scale);
        get("budget", c.budget);
        get("mlp_depth", c.mlp_depth);
        get("mlp_width", c.mlp_width);
        get("emb", c.emb);
        get("memory", c.memory);
        if (j.contains("aggregation")) c.aggregation = parse_aggregation(j.at("aggregation").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

std::size_t Trajectory::label_count() const {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.targets.size();
    return n;
}

double beta_schedule(double beta0, int iteration) { return std::pow(beta0, iteration); }

Trajectory collect_trajectory(const Graph& graph, NodeId start, NodeId goal, const HeuristicNet& net,
                              const DistanceField& field, double beta, int t, int t_tau, const CollectOptions& options,
                              std::mt19937_64& rng) {
    if (field.goal != goal) throw std::invalid_argument("collect_trajectory: distance field belongs to another goal");
    if (!graph.valid(start) || !field.reachable(start)) {
        throw std::invalid_argument("collect_trajectory: start and goal are not connected");
    }
    if (!(beta >= 0 && beta <= 1)) throw std::invalid_argument("collect_trajectory: beta must lie in [0, 1]");
    if (t < 0 || t_tau < 0) throw std::invalid_argument("collect_trajectory: negative step counts");

    Trajectory tr;
    tr.start = start;
    tr.goal = goal;
    auto gf = graph.features(goal);
    tr.goal_features.assign(gf.begin(), gf.end());

    PhilScorer scorer(graph, net, goal, options.n, rng());
    SearchState state = init_search(graph, start);
    FringeQueue oracle;
    std::uint64_t oracle_counter = 0;
    oracle.push(start, field.dist[start], oracle_counter++);

    auto target_of = [&](NodeId v) {
        if (!field.reachable(v)) throw std::logic_error("collect_trajectory: unreachable node in the fringe");
        return static_cast<double>(field.dist[v]);
    };
    auto admit = [&](std::span<const NodeId> fresh, std::span<const double> scores) {
        for (std::size_t i = 0; i < fresh.size(); ++i) {
            state.enqueue(fresh[i], scores[i]);
            oracle.push(fresh[i], target_of(fresh[i]), oracle_counter++);
        }
    };

    int done = 0;
    for (; done < t; ++done) {
        const NodeId v = state.pop_open();
        if (v < 0) break;
        auto fresh = expand(state, graph, v);
        if (!fresh.empty()) admit(fresh, scorer.score(scorer.observe(fresh)));
    }
    tr.rollin = done;
    tr.initial_z = options.init_state == InitStateMode::RolledIn && done > 0 ? scorer.memory().detach()
                                                                             : net.zero_memory();

    std::bernoulli_distribution coin(beta);
    for (int k = 0; k < t_tau; ++k) {
        const bool use_oracle = coin(rng);
        const NodeId v = use_oracle ? pop_oracle(oracle, state) : state.pop_open();
        if (v < 0) break;
        ++tr.rollout_pops;
        if (use_oracle) ++tr.oracle_pops;
        auto fresh = expand(state, graph, v);
        TrajectoryStep step;
        if (!fresh.empty()) {
            step.observations = scorer.observe(fresh);
            for (NodeId w : fresh) step.targets.push_back(target_of(w));
            admit(fresh, scorer.score(step.observations));
        }
        tr.steps.push_back(std::move(step));
    }
    return tr;
}

Tensor tbtt_loss(const HeuristicNet& net, const Trajectory& trajectory) {
    Tensor z = trajectory.initial_z.defined() ? trajectory.initial_z : net.zero_memory();
    const Real inv_scale = static_cast<Real>(1.0 / net.target_scale());
    std::vector<Tensor> losses;
    for (std::size_t k = 0; k < trajectory.steps.size(); ++k) {
        const auto& step = trajectory.steps[k];
        if (step.observations.empty()) continue;
        if (step.targets.size() != step.observations.size()) {
            throw std::invalid_argument("tbtt: step " + std::to_string(k) + " has mismatched targets");
        }
        ForwardOutput out = net.forward(step.observations, trajectory.goal_features, z);
        std::vector<Real> targets(step.targets.size());
        for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<Real>(step.targets[i]) * inv_scale;
        const std::size_t count = targets.size();
        Tensor loss = mse_loss(out.h, Tensor(count, 1, std::move(targets)));
        if (!std::isfinite(loss.item())) throw std::runtime_error("tbtt: non-finite loss at step " + std::to_string(k));
        losses.push_back(loss);
        z = out.z_next;
    }
    if (losses.empty()) throw std::invalid_argument("tbtt: trajectory has no labelled steps");
    return reduce_mean(concat(losses, Axis::Rows), Axis::Rows);
}

double tbtt_batch(const HeuristicNet& net, std::span<const Trajectory* const> batch, Adam& optimizer) {
    std::size_t usable = 0;
    for (const Trajectory* tr : batch) usable += tr->degenerate() ? 0 : 1;
    if (usable == 0) return 0.0;
    optimizer.zero_grad();
    double total = 0;
    for (const Trajectory* tr : batch) {
        if (tr->degenerate()) continue;
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = tbtt_loss(net, *tr);
        total += static_cast<double>(loss.item());
        tape.backward(scale(loss, Real(1) / static_cast<Real>(usable)));
    }
    optimizer.step();
    optimizer.zero_grad();
    return total / static_cast<double>(usable);
}

double tbtt_step(const HeuristicNet& net, const Trajectory& trajectory, Adam& optimizer) {
    const Trajectory* one[] = {&trajectory};
    return tbtt_batch(net, one, optimizer);
}

double mean_phil_expansions(const HeuristicNet& net, const SplitData& split, std::span<const Problem> problems,
                            std::size_t n, std::uint64_t seed, std::size_t budget) {
    if (problems.empty()) throw std::invalid_argument("validation: no problems");
    double total = 0;
    for (std::size_t i = 0; i < problems.size(); ++i) {
        const auto& p = problems[i];
        const Graph& g = split.graphs[split.graph_index(p)];
        total += static_cast<double>(phil_search(g, p.start, p.goal, net, n, instance_seed(seed, 7, i), budget).expansions);
    }
    return total / static_cast<double>(problems.size());
}

TrainResult train(const SplitData& train_split, const SplitData& val_split, const TrainConfig& cfg,
                  const IterationCallback& on_iteration) {
    cfg.validate();
    if (train_split.problems.empty()) throw std::invalid_argument("train: empty training split");
    if (val_split.problems.empty()) throw std::invalid_argument("train: empty validation split");
    const Graph& first = train_split.graphs.front();

    ModelSpec spec;
    spec.node_dim = first.node_dim();
    spec.edge_dim = first.edge_dim();
    spec.mlp_depth = cfg.mlp_depth;
    spec.mlp_width = cfg.mlp_width;
    spec.emb = cfg.emb;
    spec.memory = cfg.memory;
    spec.aggregation = cfg.aggregation;
    std::mt19937_64 rng(cfg.seed);
    HeuristicNet net(spec, rng());
    net.set_target_scale(cfg.target_scale > 0 ? cfg.target_scale : default_target_scale(first));
    net.set_input_scale(default_input_scale(first));

    const std::size_t val_count = std::min<std::size_t>(cfg.val_problems, val_split.problems.size());
    std::span<const Problem> val_problems(val_split.problems.data(), val_count);
    const std::uint64_t val_seed = rng();
    auto validate = [&](const HeuristicNet& candidate) {
        return mean_phil_expansions(candidate, val_split, val_problems, cfg.n, val_seed, cfg.budget);
    };

    TrainResult result;
    result.best = net.clone();
    result.best_val_expansions = validate(net);
    result.log.push_back({0, 1.0, 0.0, result.best_val_expansions, 0, 0});
    if (on_iteration) on_iteration(result.log.back(), net);

    Adam optimizer(net.parameter_list(), AdamConfig{cfg.lr});
    FieldCache fields;
    std::vector<Trajectory> dataset;
    std::uniform_int_distribution<std::size_t> pick_problem(0, train_split.problems.size() - 1);
    std::uniform_int_distribution<int> pick_rollin(0, cfg.T - cfg.t_tau);
    const CollectOptions collect{cfg.n, cfg.init_state};

    for (int i = 1; i <= cfg.N; ++i) {
        const double beta = beta_schedule(cfg.beta0, i);
        for (int j = 0; j < cfg.m; ++j) {
            const Problem& p = train_split.problems[pick_problem(rng)];
            const std::size_t gi = train_split.graph_index(p);
            const Graph& g = train_split.graphs[gi];
            const DistanceField& field = fields.get(train_split, gi, p.goal);
            const int t = pick_rollin(rng);
            Trajectory tr = collect_trajectory(g, p.start, p.goal, net, field, beta, t, cfg.t_tau, collect, rng);
            tr.graph = p.graph;
            result.labels += tr.label_count();
            dataset.push_back(std::move(tr));
        }

        std::vector<const Trajectory*> order;
        for (const auto& tr : dataset) order.push_back(&tr);
        double loss_sum = 0;
        std::size_t loss_batches = 0;
        for (int e = 0; e < cfg.epochs; ++e) {
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch)) {
                const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch));
                std::span<const Trajectory* const> batch(order.data() + b, end - b);
                bool any = std::any_of(batch.begin(), batch.end(), [](const Trajectory* t) { return !t->degenerate(); });
                if (!any) continue;
                loss_sum += tbtt_batch(net, batch, optimizer);
                ++loss_batches;
            }
        }

        const double val = validate(net);
        TrainLogRow row{i, beta, loss_batches ? loss_sum / static_cast<double>(loss_batches) : 0.0, val,
                        dataset.size(), result.labels};
        result.log.push_back(row);
        if (val < result.best_val_expansions) {
            result.best_val_expansions = val;
            result.best_iteration = i;
            result.best = net.clone();
        }
        if (on_iteration) on_iteration(row, net);
    }
    return result;
}

TrainResult train(const std::filesystem::path& dataset, const TrainConfig& cfg, const IterationCallback& on_iteration) {
    SplitData train_split = load_split(dataset / "train");
    SplitData val_split = load_split(dataset / "val");
    return train(train_split, val_split, cfg, on_iteration);
}

void write_train_log_csv(const std::vector<TrainLogRow>& log, std::ostream& out) {
    out << "iteration,beta,loss,val_expansions,dataset_size,labels\n";
    for (const auto& r : log) {
        out << r.iteration << ',' << r.beta << ',' << r.loss << ',' << r.val_expansions << ',' << r.dataset_size << ','
            << r.labels << '\n';
    }
}

// ---------------------------------------------------------------------------
// Supervised baseline

void SlConfig::validate() const {
    if (depth < 1 || width < 1) throw std::invalid_argument("sl config: depth and width must be >= 1");
    if (!(lr > 0) || batch < 1 || steps < 0) throw std::invalid_argument("sl config: bad optimizer settings");
    if (!(random_action_prob >= 0 && random_action_prob <= 1)) {
        throw std::invalid_argument("sl config: random_action_prob must lie in [0, 1]");
    }
    if (target_scale < 0) throw std::invalid_argument("sl config: target_scale must be >= 0");
}

nlohmann::ordered_json sl_config_to_json(const SlConfig& c) {
    return {{"depth", c.depth},   {"width", c.width}, {"lr", c.lr},
            {"batch", c.batch},   {"steps", c.steps}, {"seed", c.seed},
            {"target_scale", c.target_scale},         {"random_action_prob", c.random_action_prob}};
}

SlConfig sl_config_from_json(const nlohmann::json& j) {
    SlConfig c;
    reject_unknown_keys(j, key_set(sl_config_to_json(c)), "sl config");
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("depth", c.depth);
        get("width", c.width);
        get("lr", c.lr);
        get("batch", c.batch);
        get("steps", c.steps);
        get("seed", c.seed);
        get("target_scale", c.target_scale);
        get("random_action_prob", c.random_action_prob);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("sl config: ") + e.what());
    }
    c.validate();
    return c;
}

DistanceMlp train_sl_baseline(const SplitData& split, StartGoalPolicy policy, const SlConfig& cfg) {
    cfg.validate();
    if (split.problems.empty()) throw std::invalid_argument("sl: empty training split");
    const Graph& first = split.graphs.front();
    std::mt19937_64 rng(cfg.seed);
    DistanceMlp net({first.node_dim(), cfg.depth, cfg.width, 0.01}, rng());
    net.set_target_scale(cfg.target_scale > 0 ? cfg.target_scale : default_target_scale(first));
    net.set_input_scale(default_input_scale(first));
    Adam optimizer(net.parameter_list(), AdamConfig{cfg.lr});
    FieldCache fields;
    std::uniform_int_distribution<std::size_t> pick_problem(0, split.problems.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_graph(0, split.graphs.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Fixed corners: walk from the start, following the oracle or a random neighbor.
    auto rollout_pair = [&](NodeId& node, NodeId& goal, std::size_t& gi) {
        const Problem& p = split.problems[pick_problem(rng)];
        gi = split.graph_index(p);
        const Graph& g = split.graphs[gi];
        const DistanceField& field = fields.get(split, gi, p.goal);
        const int length = std::uniform_int_distribution<int>(0, 2 * field.dist[p.start])(rng);
        NodeId v = p.start;
        for (int s = 0; s < length && v != p.goal; ++s) {
            auto nbrs = g.neighbors(v);
            if (nbrs.empty()) break;
            if (unit(rng) < cfg.random_action_prob) {
                v = nbrs[std::uniform_int_distribution<std::size_t>(0, nbrs.size() - 1)(rng)];
            } else {
                v = *std::min_element(nbrs.begin(), nbrs.end(),
                                      [&](NodeId a, NodeId b) { return field.dist[a] < field.dist[b]; });
            }
        }
        node = v;
        goal = p.goal;
    };
    auto uniform_pair = [&](NodeId& node, NodeId& goal, std::size_t& gi) {
        gi = pick_graph(rng);
        const Graph& g = split.graphs[gi];
        std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(g.node_count()) - 1);
        goal = pick(rng);
        const DistanceField& field = fields.get(split, gi, goal);
        do {
            node = pick(rng);
        } while (!field.reachable(node));
    };

    const std::size_t in = 2 * first.node_dim() + 2;
    const Real inv_scale = static_cast<Real>(1.0 / net.target_scale());
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<Real> rows(static_cast<std::size_t>(cfg.batch) * in), targets(static_cast<std::size_t>(cfg.batch));
        for (int b = 0; b < cfg.batch; ++b) {
            NodeId v = -1, goal = -1;
            std::size_t gi = 0;
            if (policy == StartGoalPolicy::FixedCorners) rollout_pair(v, goal, gi);
            else uniform_pair(v, goal, gi);
            const Graph& g = split.graphs[gi];
            pair_features(g.features(v), g.features(goal), std::span<Real>(rows).subspan(std::size_t(b) * in, in),
                          net.input_scale());
            targets[b] = static_cast<Real>(fields.get(split, gi, goal).dist[v]) * inv_scale;
        }
        {
            Tape tape;
            TapeScope scope(tape);
            Tensor pred = net.forward(Tensor(static_cast<std::size_t>(cfg.batch), in, std::move(rows)));
            Tensor loss = mse_loss(pred, Tensor(static_cast<std::size_t>(cfg.batch), 1, std::move(targets)));
            if (!std::isfinite(loss.item())) throw std::runtime_error("sl: non-finite loss at step " + std::to_string(step));
            tape.backward(loss);
        }
        optimizer.step();
        optimizer.zero_grad();
    }
    return net;
}

StartGoalPolicy dataset_policy(const std::filesystem::path& dataset) {
    const auto spec_path = dataset / "spec.json";
    if (!std::filesystem::exists(spec_path)) return StartGoalPolicy::UniformRandom;
    auto j = read_json_file(spec_path);
    return parse_start_goal_policy(j.value("start_goal_policy", std::string("uniform_random")));
}

DistanceMlp train_sl_baseline(const std::filesystem::path& dataset, const SlConfig& cfg) {
    return train_sl_baseline(load_split(dataset / "train"), dataset_policy(dataset), cfg);
}

}  // namespace phil
