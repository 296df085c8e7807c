#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "phil/graph.hpp"
#include "phil/tensor.hpp"

namespace phil {

enum class Aggregation { Sum, Mean, Max, Softmax };

std::string to_string(Aggregation a);
Aggregation parse_aggregation(const std::string& name);

/// Architecture hyperparameters of the heuristic network.
struct ModelSpec {
    std::size_t node_dim = 2;
    std::size_t edge_dim = 0;
    std::size_t mlp_depth = 3;   // linear layers in the projection and head MLPs
    std::size_t mlp_width = 128;
    std::size_t emb = 128;
    std::size_t memory = 64;     // d, width of z
    Aggregation aggregation = Aggregation::Softmax;
    double leaky_slope = 0.01;
};

/// Fully connected layer y = x W + b with W stored [in x out].
struct Linear {
    Tensor weight;
    Tensor bias;

    Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
};

/// Stack of linear layers with LeakyReLU between them (none after the last one).
struct Mlp {
    std::vector<Linear> layers;
    Real slope = Real(0.01);

    Tensor operator()(const Tensor& x) const;
};

/// Per-observation distance features: [x; x_g; ||x - x_g||; 1 - cos(x, x_g)], with
/// the first three blocks divided by `input_scale`. The cosine term is 0 when
/// either vector is zero.
void pair_features(std::span<const double> x, std::span<const double> goal, std::span<Real> out,
                   double input_scale = 1.0);
double euclidean_distance(std::span<const double> a, std::span<const double> b);
double cosine_distance(std::span<const double> a, std::span<const double> b);

struct ForwardOutput {
    Tensor h;       // [B x 1], in target units (multiply by target_scale for hop counts)
    Tensor z_next;  // [1 x d]
};

/// Recurrent graph-network heuristic.
///
/// Each fringe node and its sampled neighbors are projected by a shared MLP f,
/// neighbor messages are aggregated and combined with the node embedding, a GRU
/// cell advances every node against the same memory z, and a head MLP reads the
/// GRU output next to the raw goal features. The new memory is the mean of the
/// per-node GRU states.
class HeuristicNet {
public:
    HeuristicNet() = default;
    HeuristicNet(const ModelSpec& spec, std::uint64_t seed);

    const ModelSpec& spec() const { return spec_; }
    double target_scale() const { return target_scale_; }
    void set_target_scale(double s);
    /// Node features are divided by this before entering the network.
    double input_scale() const { return input_scale_; }
    void set_input_scale(double s);

    Tensor zero_memory() const { return Tensor(1, spec_.memory); }

    ForwardOutput forward(std::span<const Observation> observations, std::span<const double> goal,
                          const Tensor& z) const;

    /// Parameters in a fixed order; the tensors share storage with the net.
    NamedTensors parameters() const;
    std::vector<Tensor> parameter_list() const;
    std::size_t parameter_count() const;

    /// Head output layer, exposed so callers can zero it for degenerate runs.
    Linear& head_output() { return head_.layers.back(); }

    HeuristicNet clone() const;

private:
    void build(std::uint64_t seed);

    ModelSpec spec_;
    double target_scale_ = 1.0;
    double input_scale_ = 1.0;
    Mlp f_;
    Linear gamma_;
    Linear phi_;
    Tensor tau_;
    Linear gru_input_;   // [emb x 3d]: reset | update | candidate
    Linear gru_hidden_;  // [d x 3d]
    Mlp head_;
};

nlohmann::ordered_json model_to_json(const HeuristicNet& net);
HeuristicNet model_from_json(const nlohmann::ordered_json& j);
void save_model(const HeuristicNet& net, const std::filesystem::path& path);
HeuristicNet load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Pairwise distance regressor used by the supervised baseline.

struct DistanceMlpSpec {
    std::size_t node_dim = 2;
    std::size_t depth = 5;
    std::size_t width = 256;
    double leaky_slope = 0.01;
};

class DistanceMlp {
public:
    DistanceMlp() = default;
    DistanceMlp(const DistanceMlpSpec& spec, std::uint64_t seed);

    const DistanceMlpSpec& spec() const { return spec_; }
    double target_scale() const { return target_scale_; }
    void set_target_scale(double s);
    double input_scale() const { return input_scale_; }
    void set_input_scale(double s);

    /// Rows of pair_features() for each (node, goal) pair -> [B x 1] predictions.
    Tensor forward(const Tensor& pair_rows) const;
    /// Prediction in hop units for one pair.
    double predict(std::span<const double> x, std::span<const double> goal) const;

    NamedTensors parameters() const;
    std::vector<Tensor> parameter_list() const;

private:
    DistanceMlpSpec spec_;
    double target_scale_ = 1.0;
    double input_scale_ = 1.0;
    Mlp mlp_;
};

void save_distance_mlp(const DistanceMlp& net, const std::filesystem::path& path);
DistanceMlp load_distance_mlp(const std::filesystem::path& path);

}  // namespace phil
