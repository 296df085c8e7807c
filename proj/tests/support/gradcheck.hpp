#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "phil/tensor.hpp"

namespace phil::testing {

struct GradTolerance {
    double rtol = 1e-4;
    double atol = 1e-7;
    double eps = 1e-6;
};

inline GradTolerance default_tolerance() {
    if constexpr (sizeof(Real) == 8) return {};
    return {2e-2, 2e-3, 1e-2};
}

/// Contracts an output with fixed random weights so every entry has its own coefficient.
inline Tensor weighted_sum(const Tensor& out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Tensor w = random_tensor(rng, out.rows(), out.cols(), false);
    return reduce_sum(reduce_sum(mul(out, w), Axis::Rows), Axis::Cols);
}

struct GradReport {
    std::size_t checked = 0;
    std::size_t failed = 0;
    double worst_excess = 0.0;  // largest |tape - numeric| / (atol + rtol * scale)
    std::string first_failure;
};

/// Compares tape gradients of `loss` with central differences for each input.
inline GradReport compare_gradients(const std::vector<Tensor>& inputs, const std::function<Tensor()>& loss,
                                    const GradTolerance& tol = default_tolerance()) {
    GradReport report;
    for (auto t : inputs) t.zero_grad();
    Tape tape;
    Tensor value;
    {
        TapeScope scope(tape);
        value = loss();
    }
    tape.backward(value);
    auto scalar = [&] { return double(loss().item()); };
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor& t = inputs[k];
        const auto numeric = numeric_gradient(t, scalar, tol.eps);
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            const double tg = t.has_grad() ? double(t.grad()[i]) : 0.0;
            const double bound = tol.atol + tol.rtol * std::max(std::abs(tg), std::abs(numeric[i]));
            const double excess = std::abs(tg - numeric[i]) / bound;
            report.worst_excess = std::max(report.worst_excess, excess);
            ++report.checked;
            if (excess > 1.0) {
                if (report.failed++ == 0) {
                    report.first_failure = "input " + std::to_string(k) + " entry " + std::to_string(i) + ": tape " +
                                           std::to_string(tg) + " numeric " + std::to_string(numeric[i]);
                }
            }
        }
    }
    return report;
}

/// Named gradient cases for every differentiable primitive at one random seed.
inline std::vector<std::pair<std::string, GradReport>> primitive_gradient_cases(std::uint64_t seed,
                                                                               const GradTolerance& tol = default_tolerance()) {
    std::mt19937_64 rng(seed);
    const std::size_t r = 1 + rng() % 4, c = 1 + rng() % 4, k = 1 + rng() % 4;
    Tensor a = random_tensor(rng, r, c), b = random_tensor(rng, r, c), m = random_tensor(rng, c, k);
    Tensor bias = random_tensor(rng, 1, c);
    const std::size_t n = 2 + rng() % 6;
    Tensor rows = random_tensor(rng, n, c);
    std::vector<std::size_t> offsets{0, 1, 1, n};
    std::vector<std::size_t> idx{0, r - 1, 0};
    Tensor tau = Tensor::parameter(1, 1, {Real(0.5 + double(seed % 3))});
    const std::uint64_t w = seed * 7 + 1;
    auto wrap = [w](auto f) { return [f, w] { return weighted_sum(f(), w); }; };

    std::vector<std::pair<std::string, GradReport>> out;
    auto run = [&](const std::string& name, const std::vector<Tensor>& inputs, const std::function<Tensor()>& f) {
        out.emplace_back(name, compare_gradients(inputs, wrap(f), tol));
    };
    run("matmul", {a, m}, [&] { return matmul(a, m); });
    run("add", {a, b}, [&] { return add(a, b); });
    run("add_broadcast", {a, bias}, [&] { return add(a, bias); });
    run("sub", {a, b}, [&] { return sub(a, b); });
    run("mul", {a, b}, [&] { return mul(a, b); });
    run("scale", {a}, [&] { return scale(a, Real(-1.7)); });
    run("add_scalar", {a}, [&] { return add_scalar(a, Real(0.3)); });
    run("concat_rows", {a, b}, [&] { return concat({a, b}, Axis::Rows); });
    run("concat_cols", {a, b}, [&] { return concat({a, b}, Axis::Cols); });
    run("slice", {a}, [&] { return slice(a, Axis::Cols, 0, c); });
    run("gather_rows", {a}, [&] { return gather_rows(a, idx); });
    run("leaky_relu", {a}, [&] { return leaky_relu(a, Real(0.01)); });
    run("tanh", {a}, [&] { return tanh(a); });
    run("sigmoid", {a}, [&] { return sigmoid(a); });
    run("softmax_cols", {a}, [&] { return softmax(a, Axis::Cols); });
    run("softmax_rows", {a}, [&] { return softmax(a, Axis::Rows); });
    run("reduce_sum", {a}, [&] { return reduce_sum(a, Axis::Rows); });
    run("reduce_mean", {a}, [&] { return reduce_mean(a, Axis::Cols); });
    run("reduce_max", {a}, [&] { return reduce_max(a, Axis::Rows); });
    run("mse_loss", {a, b}, [&] { return mse_loss(a, b); });
    run("segment_sum", {rows}, [&] { return segment_reduce(rows, offsets, SegmentReduce::Sum); });
    run("segment_mean", {rows}, [&] { return segment_reduce(rows, offsets, SegmentReduce::Mean); });
    run("segment_max", {rows}, [&] { return segment_reduce(rows, offsets, SegmentReduce::Max); });
    run("segment_softmax", {rows, tau}, [&] { return segment_softmax(rows, offsets, tau); });
    return out;
}

}  // namespace phil::testing
