#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "phil/graph.hpp"
#include "phil/model.hpp"
#include "phil/oracle.hpp"
#include "phil/worlds.hpp"

namespace phil {

enum class InitStateMode { RolledIn, Zeroed };

std::string to_string(InitStateMode m);
InitStateMode parse_init_state_mode(const std::string& name);

struct TrainConfig {
    int T = 128;           // roll-in horizon
    int t_tau = 16;        // roll-out (TBTT) length
    double beta0 = 0.7;
    int N = 36;            // outer iterations
    int m = 1;             // trajectories per iteration
    std::size_t n = 4;     // sampled neighbors per node
    InitStateMode init_state = InitStateMode::RolledIn;
    double lr = 0.01;
    int batch = 8;
    int epochs = 3;
    std::uint64_t seed = 0;
    int val_problems = 10;
    double target_scale = 0;  // 0: derived from the first training graph
    std::size_t budget = 0;   // validation search budget, 0 = |V|

    // Architecture (node/edge widths come from the dataset).
    std::size_t mlp_depth = 3;
    std::size_t mlp_width = 128;
    std::size_t emb = 128;
    std::size_t memory = 64;
    Aggregation aggregation = Aggregation::Softmax;

    void validate() const;
};

nlohmann::ordered_json config_to_json(const TrainConfig& cfg);
/// Strict: unknown keys raise std::invalid_argument naming the key.
TrainConfig config_from_json(const nlohmann::json& j);

struct TrajectoryStep {
    std::vector<Observation> observations;  // one per node of V_new
    std::vector<double> targets;            // h* per node, in hops
};

struct Trajectory {
    Tensor initial_z;
    std::vector<TrajectoryStep> steps;
    std::vector<double> goal_features;
    std::string graph;
    NodeId start = -1;
    NodeId goal = -1;
    int rollin = 0;
    std::size_t oracle_pops = 0;
    std::size_t rollout_pops = 0;

    std::size_t label_count() const;
    bool degenerate() const { return label_count() == 0; }
};

struct CollectOptions {
    std::size_t n = 4;
    InitStateMode init_state = InitStateMode::RolledIn;
};

/// Rolls in `t` expansions of the learned policy, then records `t_tau` expansions of
/// the mixture policy. Each mixture pop takes the oracle queue with probability
/// `beta` and the learned queue otherwise; both queues see every new node.
/// Expansion continues past the goal until t_tau steps or the graph runs out.
Trajectory collect_trajectory(const Graph& graph, NodeId start, NodeId goal, const HeuristicNet& net,
                              const DistanceField& field, double beta, int t, int t_tau, const CollectOptions& options,
                              std::mt19937_64& rng);

double beta_schedule(double beta0, int iteration);

/// Mean over non-empty steps of the per-step MSE between predictions and
/// h*/target_scale, with the memory threaded across steps from initial_z.
/// Records on the active tape when there is one.
Tensor tbtt_loss(const HeuristicNet& net, const Trajectory& trajectory);

/// One optimizer step on a single trajectory; returns the loss.
double tbtt_step(const HeuristicNet& net, const Trajectory& trajectory, Adam& optimizer);
/// One optimizer step on the mean loss of several trajectories (gradients are
/// accumulated per trajectory); degenerate trajectories are skipped.
double tbtt_batch(const HeuristicNet& net, std::span<const Trajectory* const> batch, Adam& optimizer);

struct TrainLogRow {
    int iteration = 0;
    double beta = 1.0;
    double loss = 0.0;
    double val_expansions = 0.0;
    std::size_t dataset_size = 0;
    std::size_t labels = 0;
};

struct TrainResult {
    HeuristicNet best;
    int best_iteration = 0;
    double best_val_expansions = 0.0;
    std::vector<TrainLogRow> log;
    std::size_t labels = 0;  // oracle labels consumed by all trajectories
};

using IterationCallback = std::function<void(const TrainLogRow&, const HeuristicNet&)>;

/// Mean expansions of the learned heuristic over `problems` (validation metric).
double mean_phil_expansions(const HeuristicNet& net, const SplitData& split, std::span<const Problem> problems,
                            std::size_t n, std::uint64_t seed, std::size_t budget);

/// The full imitation loop; iteration 0 is the initial network, and the
/// checkpoint with the fewest validation expansions is returned.
TrainResult train(const SplitData& train_split, const SplitData& val_split, const TrainConfig& cfg,
                  const IterationCallback& on_iteration = {});
TrainResult train(const std::filesystem::path& dataset, const TrainConfig& cfg,
                  const IterationCallback& on_iteration = {});

void write_train_log_csv(const std::vector<TrainLogRow>& log, std::ostream& out);

// ---------------------------------------------------------------------------
// Supervised distance-regression baseline

struct SlConfig {
    std::size_t depth = 5;
    std::size_t width = 256;
    double lr = 1e-3;
    int batch = 32;
    int steps = 2000;
    std::uint64_t seed = 0;
    double target_scale = 0;  // 0: derived from the first training graph
    /// Fixed-corner datasets sample nodes from oracle roll-outs with random actions;
    /// otherwise node pairs are drawn uniformly.
    double random_action_prob = 0.5;

    void validate() const;
};

nlohmann::ordered_json sl_config_to_json(const SlConfig& cfg);
SlConfig sl_config_from_json(const nlohmann::json& j);

DistanceMlp train_sl_baseline(const SplitData& train_split, StartGoalPolicy policy, const SlConfig& cfg);
DistanceMlp train_sl_baseline(const std::filesystem::path& dataset, const SlConfig& cfg);

/// Reads dataset/spec.json (if present) to decide the start-goal policy.
StartGoalPolicy dataset_policy(const std::filesystem::path& dataset);

}  // namespace phil
