#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace phil {

#ifdef PHIL_REAL_FLOAT
using Real = float;
#else
using Real = double;
#endif

struct TensorNode {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<Real> value;
    std::vector<Real> grad;  // empty until something flows into it
    bool requires_grad = false;

    Real* grad_buffer() {
        if (grad.empty()) grad.assign(value.size(), Real(0));
        return grad.data();
    }
};

/// Dense row-major matrix with optional gradient. Copies share storage.
///
/// Every tensor is rank 2; a scalar is 1x1 and a vector is 1xN.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, Real fill = Real(0));
    Tensor(std::size_t rows, std::size_t cols, std::vector<Real> data);

    static Tensor scalar(Real x) { return Tensor(1, 1, std::vector<Real>{x}); }
    /// Leaf tensor that accumulates gradients.
    static Tensor parameter(std::size_t rows, std::size_t cols, std::vector<Real> data);

    bool defined() const { return node_ != nullptr; }
    std::size_t rows() const { return node_->rows; }
    std::size_t cols() const { return node_->cols; }
    std::size_t size() const { return node_->value.size(); }
    std::vector<std::size_t> shape() const { return {rows(), cols()}; }
    std::string shape_str() const;

    std::span<const Real> data() const { return node_->value; }
    /// Mutable view; refused while a tape is recording this tensor's gradients.
    std::span<Real> mutable_data();
    Real at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
    Real item() const;

    bool requires_grad() const { return node_->requires_grad; }
    std::span<const Real> grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad() { node_->grad.clear(); }

    /// Same values, no gradient history.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    const std::shared_ptr<TensorNode>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<TensorNode> node_;
};

/// Ordered record of differentiable operations. Backward runs the recorded
/// closures in reverse recording order.
class Tape {
public:
    struct Entry {
        std::shared_ptr<TensorNode> output;
        std::function<void()> backward;
    };

    /// Tape currently recording on this thread, or nullptr.
    static Tape* active();

    void record(std::shared_ptr<TensorNode> output, std::function<void()> backward);
    /// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must be a 1x1 tensor
    /// produced by an operation on this tape.
    void backward(const Tensor& loss);
    void clear() { entries_.clear(); }
    std::size_t size() const { return entries_.size(); }

private:
    std::vector<Entry> entries_;
};

/// Makes `tape` the recording tape for the current scope.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

enum class Axis { Rows = 0, Cols = 1 };  // Rows: reduce over rows -> 1 x C

enum class SegmentReduce { Sum, Mean, Max };

// Primitives. Shape errors throw std::invalid_argument naming both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a + b; b may also be a 1 x C row broadcast over the rows of a.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real s);
Tensor add_scalar(const Tensor& a, Real s);
Tensor concat(const std::vector<Tensor>& parts, Axis axis);
Tensor slice(const Tensor& a, Axis axis, std::size_t begin, std::size_t end);
/// out[i] = a[index[i]]; gradients scatter-add back.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
Tensor leaky_relu(const Tensor& a, Real alpha);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softmax(const Tensor& a, Axis axis);
Tensor reduce_sum(const Tensor& a, Axis axis);
Tensor reduce_mean(const Tensor& a, Axis axis);
Tensor reduce_max(const Tensor& a, Axis axis);
/// mean((pred - target)^2) as a 1x1 tensor.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

/// Row segments [offsets[s], offsets[s+1]) of `rows` reduced to one row each.
/// An empty segment yields a zero row.
Tensor segment_reduce(const Tensor& rows, std::span<const std::size_t> offsets, SegmentReduce kind);
/// Per-column softmax-weighted sum within each segment:
/// w_j = exp(tau m_j) / sum_j' exp(tau m_j'), out = sum_j w_j * m_j. `tau` is 1x1.
Tensor segment_softmax(const Tensor& rows, std::span<const std::size_t> offsets, const Tensor& tau);

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Real> m;
    std::vector<Real> v;
    std::uint64_t t = 0;
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState& state, const AdamConfig& cfg);

class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg);
    /// Applies one update from the accumulated gradients (missing grads count as zero).
    void step();
    void zero_grad();
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<Tensor> params_;
    std::vector<AdamState> states_;
    AdamConfig cfg_;
};

// ---------------------------------------------------------------------------
// Serialization: {"name": {"shape": [r, c], "data": [...]}, ...} in insertion order.

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

nlohmann::ordered_json tensors_to_json(const NamedTensors& tensors);
/// Fills existing tensors by name; shapes must match.
void tensors_from_json(const nlohmann::ordered_json& j, NamedTensors& tensors);

}  // namespace phil
