#include "phil/model.hpp"

#include "phil/json_io.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace phil {

namespace {

constexpr const char* kModelFormat = "phil-model";
constexpr const char* kDistanceFormat = "phil-distance-mlp";
constexpr int kFormatVersion = 1;

Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<Real> w(in * out);
    for (auto& x : w) x = static_cast<Real>(dist(rng));
    return {Tensor::parameter(in, out, std::move(w)), Tensor::parameter(1, out, std::vector<Real>(out, Real(0)))};
}

Mlp make_mlp(std::size_t in, std::size_t width, std::size_t out, std::size_t depth, double slope,
             std::mt19937_64& rng) {
    if (depth == 0) throw std::invalid_argument("mlp depth must be >= 1");
    Mlp mlp;
    mlp.slope = static_cast<Real>(slope);
    std::size_t fan_in = in;
    for (std::size_t l = 0; l < depth; ++l) {
        const std::size_t fan_out = l + 1 == depth ? out : width;
        mlp.layers.push_back(make_linear(fan_in, fan_out, rng));
        fan_in = fan_out;
    }
    return mlp;
}

void add_linear(NamedTensors& out, const std::string& prefix, const Linear& l) {
    out.emplace_back(prefix + ".weight", l.weight);
    out.emplace_back(prefix + ".bias", l.bias);
}

void add_mlp(NamedTensors& out, const std::string& prefix, const Mlp& m) {
    for (std::size_t i = 0; i < m.layers.size(); ++i) add_linear(out, prefix + "." + std::to_string(i), m.layers[i]);
}

void check_finite(const Tensor& t, const char* what) {
    for (Real v : t.data()) {
        if (!std::isfinite(v)) throw std::runtime_error(std::string("non-finite value in ") + what);
    }
}

void check_header(const nlohmann::ordered_json& j, const char* format) {
    if (!j.is_object() || j.value("format", "") != format) {
        throw std::runtime_error(std::string("not a ") + format + " file");
    }
    const int version = j.value("version", -1);
    if (version != kFormatVersion) {
        throw std::runtime_error(std::string(format) + ": unsupported version " + std::to_string(version) +
                                 " (expected " + std::to_string(kFormatVersion) + ")");
    }
}

}  // namespace

std::string to_string(Aggregation a) {
    switch (a) {
        case Aggregation::Sum: return "sum";
        case Aggregation::Mean: return "mean";
        case Aggregation::Max: return "max";
        case Aggregation::Softmax: return "softmax";
    }
    return "?";
}

Aggregation parse_aggregation(const std::string& name) {
    if (name == "sum") return Aggregation::Sum;
    if (name == "mean") return Aggregation::Mean;
    if (name == "max") return Aggregation::Max;
    if (name == "softmax") return Aggregation::Softmax;
    throw std::invalid_argument("unknown aggregation '" + name + "' (expected sum, mean, max or softmax)");
}

Tensor Mlp::operator()(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i](h);
        if (i + 1 < layers.size()) h = leaky_relu(h, slope);
    }
    return h;
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

void pair_features(std::span<const double> x, std::span<const double> goal, std::span<Real> out, double input_scale) {
    const std::size_t D = x.size();
    const double inv = 1.0 / input_scale;
    for (std::size_t i = 0; i < D; ++i) {
        out[i] = static_cast<Real>(x[i] * inv);
        out[D + i] = static_cast<Real>(goal[i] * inv);
    }
    out[2 * D] = static_cast<Real>(euclidean_distance(x, goal) * inv);
    out[2 * D + 1] = static_cast<Real>(cosine_distance(x, goal));
}

// ---------------------------------------------------------------------------
// HeuristicNet

HeuristicNet::HeuristicNet(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
    if (spec.node_dim == 0 || spec.emb == 0 || spec.memory == 0 || spec.mlp_width == 0) {
        throw std::invalid_argument("model: widths must be positive");
    }
    build(seed);
}

void HeuristicNet::build(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t in = 2 * spec_.node_dim + 2;
    const std::size_t E = spec_.emb, d = spec_.memory;
    f_ = make_mlp(in, spec_.mlp_width, E, spec_.mlp_depth, spec_.leaky_slope, rng);
    gamma_ = make_linear(2 * E + spec_.edge_dim, E, rng);
    phi_ = make_linear(2 * E, E, rng);
    tau_ = Tensor::parameter(1, 1, {Real(1)});
    gru_input_ = make_linear(E, 3 * d, rng);
    gru_hidden_ = make_linear(d, 3 * d, rng);
    head_ = make_mlp(d + spec_.node_dim, spec_.mlp_width, 1, spec_.mlp_depth, spec_.leaky_slope, rng);
}

void HeuristicNet::set_target_scale(double s) {
    if (!(s > 0) || !std::isfinite(s)) throw std::invalid_argument("target_scale must be positive");
    target_scale_ = s;
}

void HeuristicNet::set_input_scale(double s) {
    if (!(s > 0) || !std::isfinite(s)) throw std::invalid_argument("input_scale must be positive");
    input_scale_ = s;
}

ForwardOutput HeuristicNet::forward(std::span<const Observation> observations, std::span<const double> goal,
                                    const Tensor& z) const {
    const std::size_t B = observations.size();
    const std::size_t Dv = spec_.node_dim, De = spec_.edge_dim, d = spec_.memory;
    if (B == 0) throw std::invalid_argument("forward: no observations");
    if (goal.size() != Dv) {
        throw std::invalid_argument("forward: goal has " + std::to_string(goal.size()) + " features, model expects " +
                                    std::to_string(Dv));
    }
    if (!z.defined() || z.rows() != 1 || z.cols() != d) {
        throw std::invalid_argument("forward: memory must be [1 x " + std::to_string(d) + "], got " + z.shape_str());
    }
    std::size_t K = 0;
    for (const auto& o : observations) {
        if (o.features.size() != Dv) {
            throw std::invalid_argument("forward: node " + std::to_string(o.node) + " has " +
                                        std::to_string(o.features.size()) + " features, model expects " +
                                        std::to_string(Dv));
        }
        if (o.neighbor_features.size() != o.neighbors.size() * Dv || o.edge_features.size() != o.neighbors.size() * De) {
            throw std::invalid_argument("forward: inconsistent neighborhood of node " + std::to_string(o.node));
        }
        K += o.neighbors.size();
    }

    const std::size_t in = 2 * Dv + 2;
    std::vector<Real> rows((B + K) * in);
    std::vector<std::size_t> offsets(B + 1, 0), owner;
    std::vector<Real> edges;
    owner.reserve(K);
    edges.reserve(K * De);
    std::size_t k = B;
    for (std::size_t i = 0; i < B; ++i) {
        const auto& o = observations[i];
        pair_features(o.features, goal, std::span<Real>(rows).subspan(i * in, in), input_scale_);
        for (std::size_t j = 0; j < o.neighbors.size(); ++j, ++k) {
            std::span<const double> xj(o.neighbor_features.data() + j * Dv, Dv);
            pair_features(xj, goal, std::span<Real>(rows).subspan(k * in, in), input_scale_);
            owner.push_back(i);
            for (std::size_t c = 0; c < De; ++c) edges.push_back(static_cast<Real>(o.edge_features[j * De + c]));
        }
        offsets[i + 1] = offsets[i] + o.neighbors.size();
    }

    const Real slope = static_cast<Real>(spec_.leaky_slope);
    Tensor projected = f_(Tensor(B + K, in, std::move(rows)));
    Tensor nodes = slice(projected, Axis::Rows, 0, B);
    Tensor aggregated;
    if (K > 0) {
        std::vector<Tensor> parts{gather_rows(nodes, owner), slice(projected, Axis::Rows, B, B + K)};
        if (De > 0) parts.emplace_back(K, De, std::move(edges));
        Tensor messages = leaky_relu(gamma_(concat(parts, Axis::Cols)), slope);
        switch (spec_.aggregation) {
            case Aggregation::Sum: aggregated = segment_reduce(messages, offsets, SegmentReduce::Sum); break;
            case Aggregation::Mean: aggregated = segment_reduce(messages, offsets, SegmentReduce::Mean); break;
            case Aggregation::Max: aggregated = segment_reduce(messages, offsets, SegmentReduce::Max); break;
            case Aggregation::Softmax: aggregated = segment_softmax(messages, offsets, tau_); break;
        }
    } else {
        aggregated = Tensor(B, spec_.emb);
    }
    Tensor g = leaky_relu(phi_(concat({nodes, aggregated}, Axis::Cols)), slope);

    const std::vector<std::size_t> broadcast(B, 0);
    Tensor zb = gather_rows(z, broadcast);
    Tensor gi = gru_input_(g);
    Tensor gh = gru_hidden_(zb);
    Tensor r = sigmoid(add(slice(gi, Axis::Cols, 0, d), slice(gh, Axis::Cols, 0, d)));
    Tensor u = sigmoid(add(slice(gi, Axis::Cols, d, 2 * d), slice(gh, Axis::Cols, d, 2 * d)));
    Tensor n = tanh(add(slice(gi, Axis::Cols, 2 * d, 3 * d), mul(r, slice(gh, Axis::Cols, 2 * d, 3 * d))));
    Tensor h = add(n, mul(u, sub(zb, n)));  // (1 - u) * n + u * z

    std::vector<Real> goal_row(Dv);
    for (std::size_t c = 0; c < Dv; ++c) goal_row[c] = static_cast<Real>(goal[c] / input_scale_);
    Tensor goals = gather_rows(Tensor(1, Dv, std::move(goal_row)), broadcast);
    ForwardOutput out{head_(concat({h, goals}, Axis::Cols)), reduce_mean(h, Axis::Rows)};
    check_finite(out.h, "heuristic output");
    check_finite(out.z_next, "memory state");
    return out;
}

NamedTensors HeuristicNet::parameters() const {
    NamedTensors out;
    add_mlp(out, "f", f_);
    add_linear(out, "gamma", gamma_);
    add_linear(out, "phi", phi_);
    out.emplace_back("tau", tau_);
    add_linear(out, "gru.input", gru_input_);
    add_linear(out, "gru.hidden", gru_hidden_);
    add_mlp(out, "head", head_);
    return out;
}

std::vector<Tensor> HeuristicNet::parameter_list() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : parameters()) out.push_back(t);
    return out;
}

std::size_t HeuristicNet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : parameters()) n += t.size();
    return n;
}

HeuristicNet HeuristicNet::clone() const { return model_from_json(model_to_json(*this)); }

nlohmann::ordered_json model_to_json(const HeuristicNet& net) {
    const auto& s = net.spec();
    nlohmann::ordered_json j;
    j["format"] = kModelFormat;
    j["version"] = kFormatVersion;
    j["arch"] = {{"node_dim", s.node_dim},   {"edge_dim", s.edge_dim}, {"mlp_depth", s.mlp_depth},
                 {"mlp_width", s.mlp_width}, {"emb", s.emb},           {"memory", s.memory},
                 {"aggregation", to_string(s.aggregation)},            {"leaky_slope", s.leaky_slope}};
    j["target_scale"] = net.target_scale();
    j["input_scale"] = net.input_scale();
    j["params"] = tensors_to_json(net.parameters());
    return j;
}

HeuristicNet model_from_json(const nlohmann::ordered_json& j) {
    check_header(j, kModelFormat);
    try {
        const auto& a = j.at("arch");
        ModelSpec spec;
        spec.node_dim = a.at("node_dim").get<std::size_t>();
        spec.edge_dim = a.at("edge_dim").get<std::size_t>();
        spec.mlp_depth = a.at("mlp_depth").get<std::size_t>();
        spec.mlp_width = a.at("mlp_width").get<std::size_t>();
        spec.emb = a.at("emb").get<std::size_t>();
        spec.memory = a.at("memory").get<std::size_t>();
        spec.aggregation = parse_aggregation(a.at("aggregation").get<std::string>());
        spec.leaky_slope = a.at("leaky_slope").get<double>();
        HeuristicNet net(spec, 0);
        net.set_target_scale(j.at("target_scale").get<double>());
        net.set_input_scale(j.at("input_scale").get<double>());
        auto params = net.parameters();
        tensors_from_json(j.at("params"), params);
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("phil-model: ") + e.what());
    }
}

void save_model(const HeuristicNet& net, const std::filesystem::path& path) {
    write_json_file(model_to_json(net), path);
}

HeuristicNet load_model(const std::filesystem::path& path) { return model_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// DistanceMlp

DistanceMlp::DistanceMlp(const DistanceMlpSpec& spec, std::uint64_t seed) : spec_(spec) {
    std::mt19937_64 rng(seed);
    mlp_ = make_mlp(2 * spec.node_dim + 2, spec.width, 1, spec.depth, spec.leaky_slope, rng);
}

void DistanceMlp::set_target_scale(double s) {
    if (!(s > 0) || !std::isfinite(s)) throw std::invalid_argument("target_scale must be positive");
    target_scale_ = s;
}

void DistanceMlp::set_input_scale(double s) {
    if (!(s > 0) || !std::isfinite(s)) throw std::invalid_argument("input_scale must be positive");
    input_scale_ = s;
}

Tensor DistanceMlp::forward(const Tensor& pair_rows) const { return mlp_(pair_rows); }

double DistanceMlp::predict(std::span<const double> x, std::span<const double> goal) const {
    const std::size_t in = 2 * spec_.node_dim + 2;
    std::vector<Real> row(in);
    pair_features(x, goal, row, input_scale_);
    return static_cast<double>(forward(Tensor(1, in, std::move(row))).item()) * target_scale_;
}

NamedTensors DistanceMlp::parameters() const {
    NamedTensors out;
    add_mlp(out, "mlp", mlp_);
    return out;
}

std::vector<Tensor> DistanceMlp::parameter_list() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : parameters()) out.push_back(t);
    return out;
}

void save_distance_mlp(const DistanceMlp& net, const std::filesystem::path& path) {
    const auto& s = net.spec();
    nlohmann::ordered_json j;
    j["format"] = kDistanceFormat;
    j["version"] = kFormatVersion;
    j["arch"] = {{"node_dim", s.node_dim}, {"depth", s.depth}, {"width", s.width}, {"leaky_slope", s.leaky_slope}};
    j["target_scale"] = net.target_scale();
    j["input_scale"] = net.input_scale();
    j["params"] = tensors_to_json(net.parameters());
    write_json_file(j, path);
}

DistanceMlp load_distance_mlp(const std::filesystem::path& path) {
    auto j = read_json_file(path);
    check_header(j, kDistanceFormat);
    try {
        const auto& a = j.at("arch");
        DistanceMlpSpec spec;
        spec.node_dim = a.at("node_dim").get<std::size_t>();
        spec.depth = a.at("depth").get<std::size_t>();
        spec.width = a.at("width").get<std::size_t>();
        spec.leaky_slope = a.at("leaky_slope").get<double>();
        DistanceMlp net(spec, 0);
        net.set_target_scale(j.at("target_scale").get<double>());
        net.set_input_scale(j.at("input_scale").get<double>());
        auto params = net.parameters();
        tensors_from_json(j.at("params"), params);
        return net;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("phil-distance-mlp: ") + e.what());
    }
}

}  // namespace phil
