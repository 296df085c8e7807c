#include "phil/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace phil {

namespace {

thread_local Tape* g_active_tape = nullptr;

using NodePtr = std::shared_ptr<TensorNode>;

NodePtr make_node(std::size_t rows, std::size_t cols) {
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->value.assign(rows * cols, Real(0));
    return n;
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (g_active_tape == nullptr) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

void record(const NodePtr& out, std::function<void()> fn) {
    out->requires_grad = true;
    g_active_tape->record(out, std::move(fn));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

void require_defined(const char* op, const Tensor& t) {
    if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
    require_defined("unary", a);
    auto out = make_node(a.rows(), a.cols());
    const auto& x = a.node()->value;
    for (std::size_t i = 0; i < x.size(); ++i) out->value[i] = fwd(x[i]);
    if (tracking({&a})) {
        auto an = a.node();
        std::weak_ptr<TensorNode> weak = out;
        record(out, [an, weak, deriv] {
            auto on = weak.lock();
            Real* ga = an->grad_buffer();
            for (std::size_t i = 0; i < on->value.size(); ++i) ga[i] += on->grad[i] * deriv(an->value[i], on->value[i]);
        });
    }
    return Tensor(out);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::size_t rows, std::size_t cols, Real fill) : node_(make_node(rows, cols)) {
    std::fill(node_->value.begin(), node_->value.end(), fill);
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<Real> data) : node_(std::make_shared<TensorNode>()) {
    if (data.size() != rows * cols) {
        throw std::invalid_argument("tensor: " + std::to_string(data.size()) + " values for shape [" +
                                    std::to_string(rows) + " x " + std::to_string(cols) + "]");
    }
    node_->rows = rows;
    node_->cols = cols;
    node_->value = std::move(data);
}

Tensor Tensor::parameter(std::size_t rows, std::size_t cols, std::vector<Real> data) {
    Tensor t(rows, cols, std::move(data));
    t.node_->requires_grad = true;
    return t;
}

std::string Tensor::shape_str() const {
    if (!node_) return "[undefined]";
    return "[" + std::to_string(rows()) + " x " + std::to_string(cols()) + "]";
}

std::span<Real> Tensor::mutable_data() {
    if (g_active_tape != nullptr && node_->requires_grad) {
        throw std::logic_error("tensor: in-place write to a gradient-tracked tensor while a tape is recording");
    }
    return node_->value;
}

Real Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item: tensor " + shape_str() + " is not a scalar");
    return node_->value[0];
}

Tensor Tensor::detach() const {
    return Tensor(rows(), cols(), node_->value);
}

// ---------------------------------------------------------------------------
// Tape

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<TensorNode> output, std::function<void()> backward) {
    entries_.push_back({std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    require_defined("backward", loss);
    if (loss.size() != 1) throw std::invalid_argument("backward: loss " + loss.shape_str() + " is not a scalar");
    std::size_t end = entries_.size();
    while (end > 0 && entries_[end - 1].output != loss.node()) --end;
    if (end == 0) throw std::logic_error("backward: loss tensor was not recorded on this tape");
    loss.node()->grad_buffer()[0] += Real(1);
    for (std::size_t k = end; k-- > 0;) {
        auto& e = entries_[k];
        if (!e.output->grad.empty()) e.backward();
    }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

// ---------------------------------------------------------------------------
// Primitives

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined("matmul", a);
    require_defined("matmul", b);
    if (a.cols() != b.rows()) shape_error("matmul", a, b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    auto out = make_node(m, n);
    const Real* A = a.node()->value.data();
    const Real* B = b.node()->value.data();
    Real* C = out->value.data();
    for (std::size_t i = 0; i < m; ++i) {
        Real* c = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const Real aip = A[i * k + p];
            if (aip == Real(0)) continue;
            const Real* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += aip * brow[j];
        }
    }
    if (tracking({&a, &b})) {
        auto an = a.node(), bn = b.node();
        std::weak_ptr<TensorNode> weak = out;
        record(out, [an, bn, weak, m, k, n] {
            auto on = weak.lock();
            const Real* G = on->grad.data();
            const Real* A = an->value.data();
            const Real* B = bn->value.data();
            if (an->requires_grad) {
                Real* GA = an->grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    const Real* g = G + i * n;
                    for (std::size_t p = 0; p < k; ++p) {
                        const Real* brow = B + p * n;
                        Real s = 0;
                        for (std::size_t j = 0; j < n; ++j) s += g[j] * brow[j];
                        GA[i * k + p] += s;
                    }
                }
            }
            if (bn->requires_grad) {
                Real* GB = bn->grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                    const Real* g = G + i * n;
                    for (std::size_t p = 0; p < k; ++p) {
                        const Real aip = A[i * k + p];
                        if (aip == Real(0)) continue;
                        Real* gb = GB + p * n;
                        for (std::size_t j = 0; j < n; ++j) gb[j] += aip * g[j];
                    }
                }
            }
        });
    }
    return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_defined("add", a);
    require_defined("add", b);
    const bool same = a.rows() == b.rows() && a.cols() == b.cols();
    const bool row_bcast = !same && b.rows() == 1 && b.cols() == a.cols();
    if (!same && !row_bcast) shape_error("add", a, b);
    const std::size_t R = a.rows(), C = a.cols();
    auto out = make_node(R, C);
    const Real* A = a.node()->value.data();
    const Real* B = b.node()->value.data();
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C; ++c) out->value[r * C + c] = A[r * C + c] + B[same ? r * C + c : c];
    }
    if (tracking({&a, &b})) {
        auto an = a.node(), bn = b.node();
        std::weak_ptr<TensorNode> weak = out;
        record(out, [an, bn, weak, same, R, C] {
            auto on = weak.lock();
            const Real* G = on->grad.data();
            if (an->requires_grad) {
                Real* ga = an->grad_buffer();
                for (std::size_t i = 0; i < R * C; ++i) ga[i] += G[i];
            }
            if (bn->requires_grad) {
                Real* gb = bn->grad_buffer();
                for (std::size_t r = 0; r < R; ++r) {
                    for (std::size_t c = 0; c < C; ++c) gb[same ? r * C + c : c] += G[r * C + c];
                }
            }
        });
    }
    return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_defined("sub", a);
    require_defined("sub", b);
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("sub", a, b);
    auto out = make_node(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out->value[i] = a.data()[i] - b.data()[i];
    if (tracking({&a, &b})) {
        auto an = a.node(), bn = b.node();
        std::weak_ptr<TensorNode> weak = out;
        record(out, [an, bn, weak] {
            auto on = weak.lock();
            if (an->requires_grad) {
                Real* ga = an->grad_buffer();
                for (std::size_t i = 0; i < on->grad.size(); ++i) ga[i] += on->grad[i];
            }
            if (bn->requires_grad) {
                Real* gb = bn->grad_buffer();
                for (std::size_t i = 0; i < on->grad.size(); ++i) gb[i] -= on->grad[i];
            }
        });
    }
    return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_defined("mul", a);
    require_defined("mul", b);
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error("mul", a, b);
    auto out = make_node(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out->value[i] = a.data()[i] * b.data()[i];
    if (tracking({&a, &b})) {
        auto an = a.node(), bn = b.node();
        std::weak_ptr<TensorNode> weak = out;
        record(out, [an, bn, weak] {
            auto on = weak.lock();
            const std::size_t N = on->grad.size();
            if (an->requires_grad) {
                Real* ga = an->grad_buffer();
                for (std::size_t i = 0; i < N; ++i) ga[i] += on->grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                Real* gb = bn->grad_buffer();
                for (std::size_t i = 0; i < N; ++i) gb[i] += on->grad[i] * an->value[i];
            }
        });
    }
    return Tensor(out);
}

Tensor scale(const Tensor& a, Real s) {
    return unary(a, [s](Real x) { return s * x; }, [s](Real, Real) { return s; });
}

Tensor add_scalar(const Tensor& a, Real s) {
    return unary(a, [s](Real x) { return x + s; }, [](Real, Real) { return Real(1); });
}

Tensor leaky_relu(const Tensor& a, Real alpha) {
    return unary(a, [alpha](Real x) { return x > 0 ? x : alpha * x; },
                 [alpha](Real x, Real) { return x > 0 ? Real(1) : alpha; });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](Real x) { return std::tanh(x); }, [](Real, Real y) { return Real(1) - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a,
        [](Real x) {
            if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
            Real e = std::exp(x);
            return e / (Real(1) + e);
        },
        [](Real, Real y) { return y * (Real(1) - y); });
}

Tensor concat(const std::vector<Tensor>& parts, Axis axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    for (const auto& p : parts) require_defined("concat", p);
    std::size_t R = 0, C = 0;
    if (axis == Axis::Rows) {
        C = parts[0].cols();
        for (const auto& p : parts) {
            if (p.cols() != C) shape_error("concat(rows)", parts[0], p);
            R += p.rows();
        }
    } else {
        R = parts[0].rows();
        for (const auto& p : parts) {
            if (p.rows() != R) shape_error("concat(cols)", parts[0], p);
            C += p.cols();
        }
    }
    auto out = make_node(R, C);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const Real* src = p.node()->value.data();
        if (axis == Axis::Rows) {
            std::copy(src, src + p.size(), out->value.data() + offset * C);
            offset += p.rows();
        } else {
            for (std::size_t r = 0; r < R; ++r) {
                std::copy(src + r * p.cols(), src + (r + 1) * p.cols(), out->value.data() + r * C + offset);
            }
            offset += p.cols();
        }
    }
    bool any = false;
    for (const auto& p : parts) any |= tracking({&p});
    if (any) {
        std::vector<NodePtr> ins;
        for (const auto& p : parts) ins.push_back(p.node());
        std::weak_ptr<TensorNode> weak = out;
        record(out, [ins, weak, axis, R, C] {
            auto on = weak.lock();
            std::size_t offset = 0;
            for (const auto& in : ins) {
                if (in->requires_grad) {
                    Real* g = in->grad_buffer();
                    if (axis == Axis::Rows) {
                        const Real* src = on->grad.data() + offset * C;
                        for (std::size_t i = 0; i < in->value.size(); ++i) g[i] += src[i];
                    } else {
                        for (std::size_t r = 0; r < R; ++r) {
                            for (std::size_t c = 0; c < in->cols; ++c) g[r * in->cols + c] += on->grad[r * C + offset + c];
                        }
                    }
                }
                offset += axis == Axis::Rows ? in->rows : in->cols;
            }
        });
    }
    return Tensor(out);
}

Tensor slice(const Tensor& a, Axis axis, std::size_t begin, std::size_t end) {
    require_defined("slice", a);
    const std::size_t extent = axis == Axis::Rows ? a.rows() : a.cols();
    if (begin > end || end > extent) {
        throw std::invalid_argument("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                    ") out of bounds for " + a.shape_str());
    }
    const std::size_t R = axis == Axis::Rows ? end - begin : a.rows();
    const std::size_t C = axis == Axis::Rows ? a.cols() : end - begin;
    const std::size_t AC = a.cols();
    auto out = make_node(R, C);
    const Real* src = a.node()->value.data();
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            out->value[r * C + c] = axis == Axis::Rows ? src[(r + begin) * AC + c] : src[r * AC + c + begin];
        }
    }
    if (tracking({&a})) {
        auto an = a.node();
        std::weak_ptr<TensorNode> weak = out;
        record(out, [an, weak, axis, begin, R, C, AC] {
            auto on = weak.lock();
            Real* g = an->grad_buffer();
            for (std::size_t r = 0; r < R; ++r) {
                for (std::size_t c = 0; c < C; ++c) {
                    std::size_t idx = axis == Axis::Rows ? (r + begin) * AC + c : r * AC + c + begin;
                    g[idx] += on->grad[r * C + c];
                }
            }
        });
    }
    return Tensor(out);
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
    require_defined("gather_rows", a);
    const std::size_t C = a.cols();
    auto out = make_node(index.size(), C);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= a.rows()) {
            throw std::invalid_argument("gather_rows: row " + std::to_string(index[i]) + " out of bounds for " +
                                        a.shape_str());
        }
        std::copy_n(a.node()->value.data() + index[i] * C, C, out->value.data() + i * C);
    }
    if (tracking({&a})) {
        auto an = a.node();
        std::vector<std::size_t> idx(index.begin(), index.end());
        std::weak_ptr<TensorNode> weak = out;
        record(out, [an, weak, idx, C] {
            auto on = weak.lock();
            Real* g = an->grad_buffer();
            for (std::size_t i = 0; i < idx.size(); ++i) {
                for (std::size_t c = 0; c < C; ++c) g[idx[i] * C + c] += on->grad[i * C + c];
            }
        });
    }
    return Tensor(out);
}

namespace {

// Visits the lanes of `a` along `axis`: a lane is a column (Rows) or a row (Cols).
// Calls fn(lane_index, first_offset, stride, length).
template <typename Fn>
void for_each_lane(std::size_t R, std::size_t C, Axis axis, Fn fn) {
    if (axis == Axis::Rows) {
        for (std::size_t c = 0; c < C; ++c) fn(c, c, C, R);
    } else {
        for (std::size_t r = 0; r < R; ++r) fn(r, r * C, std::size_t(1), C);
    }
}

}  // namespace

Tensor softmax(const Tensor& a, Axis axis) {
    require_defined("softmax", a);
    const std::size_t R = a.rows(), C = a.cols();
    auto out = make_node(R, C);
    const Real* x = a.node()->value.data();
    Real* y = out->value.data();
    for_each_lane(R, C, axis, [&](std::size_t, std::size_t first, std::size_t stride, std::size_t len) {
        Real mx = -std::numeric_limits<Real>::infinity();
        for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, x[first + i * stride]);
        Real sum = 0;
        for (std::size_t i = 0; i < len; ++i) sum += (y[first + i * stride] = std::exp(x[first + i * stride] - mx));
        for (std::size_t i = 0; i < len; ++i) y[first + i * stride] /= sum;
    });
    if (tracking({&a})) {
        auto an = a.node();
        std::weak_ptr<TensorNode> weak = out;
        record(out, [an, weak, axis, R, C] {
            auto on = weak.lock();
            Real* g = an->grad_buffer();
            const Real* y = on->value.data();
            const Real* G = on->grad.data();
            for_each_lane(R, C, axis, [&](std::size_t, std::size_t first, std::size_t stride, std::size_t len) {
                Real dot = 0;
                for (std::size_t i = 0; i < len; ++i) dot += G[first + i * stride] * y[first + i * stride];
                for (std::size_t i = 0; i < len; ++i) {
                    std::size_t o = first + i * stride;
                    g[o] += y[o] * (G[o] - dot);
                }
            });
        });
    }
    return Tensor(out);
}

namespace {

Tensor reduce_linear(const Tensor& a, Axis axis, bool mean) {
    require_defined("reduce", a);
    const std::size_t R = a.rows(), C = a.cols();
    const std::size_t len = axis == Axis::Rows ? R : C;
    auto out = axis == Axis::Rows ? make_node(1, C) : make_node(R, 1);
    const Real* x = a.node()->value.data();
    const Real w = mean ? (len ? Real(1) / Real(len) : Real(0)) : Real(1);
    for_each_lane(R, C, axis, [&](std::size_t lane, std::size_t first, std::size_t stride, std::size_t n) {
        Real s = 0;
        for (std::size_t i = 0; i < n; ++i) s += x[first + i * stride];
        out->value[lane] = s * w;
    });
    if (tracking({&a})) {
        auto an = a.node();
        std::weak_ptr<TensorNode> weak = out;
        record(out, [an, weak, axis, R, C, w] {
            auto on = weak.lock();
            Real* g = an->grad_buffer();
            for_each_lane(R, C, axis, [&](std::size_t lane, std::size_t first, std::size_t stride, std::size_t n) {
                for (std::size_t i = 0; i < n; ++i) g[first + i * stride] += on->grad[lane] * w;
            });
        });
    }
    return Tensor(out);
}

}  // namespace

Tensor reduce_sum(const Tensor& a, Axis axis) { return reduce_linear(a, axis, false); }
Tensor reduce_mean(const Tensor& a, Axis axis) { return reduce_linear(a, axis, true); }

Tensor reduce_max(const Tensor& a, Axis axis) {
    require_defined("reduce_max", a);
    const std::size_t R = a.rows(), C = a.cols();
    if ((axis == Axis::Rows ? R : C) == 0) throw std::invalid_argument("reduce_max: empty axis in " + a.shape_str());
    auto out = axis == Axis::Rows ? make_node(1, C) : make_node(R, 1);
    const Real* x = a.node()->value.data();
    std::vector<std::size_t> arg(out->value.size());
    for_each_lane(R, C, axis, [&](std::size_t lane, std::size_t first, std::size_t stride, std::size_t n) {
        std::size_t best = first;
        for (std::size_t i = 1; i < n; ++i) {
            if (x[first + i * stride] > x[best]) best = first + i * stride;
        }
        arg[lane] = best;
        out->value[lane] = x[best];
    });
    if (tracking({&a})) {
        auto an = a.node();
        std::weak_ptr<TensorNode> weak = out;
        record(out, [an, weak, arg] {
            auto on = weak.lock();
            Real* g = an->grad_buffer();
            for (std::size_t lane = 0; lane < arg.size(); ++lane) g[arg[lane]] += on->grad[lane];
        });
    }
    return Tensor(out);
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    require_defined("mse_loss", pred);
    require_defined("mse_loss", target);
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) shape_error("mse_loss", pred, target);
    if (pred.size() == 0) throw std::invalid_argument("mse_loss: empty input");
    auto out = make_node(1, 1);
    const std::size_t N = pred.size();
    Real s = 0;
    for (std::size_t i = 0; i < N; ++i) {
        Real d = pred.data()[i] - target.data()[i];
        s += d * d;
    }
    out->value[0] = s / Real(N);
    if (tracking({&pred, &target})) {
        auto pn = pred.node(), tn = target.node();
        std::weak_ptr<TensorNode> weak = out;
        record(out, [pn, tn, weak, N] {
            auto on = weak.lock();
            const Real k = Real(2) * on->grad[0] / Real(N);
            Real* gp = pn->requires_grad ? pn->grad_buffer() : nullptr;
            Real* gt = tn->requires_grad ? tn->grad_buffer() : nullptr;
            for (std::size_t i = 0; i < N; ++i) {
                Real d = k * (pn->value[i] - tn->value[i]);
                if (gp) gp[i] += d;
                if (gt) gt[i] -= d;
            }
        });
    }
    return Tensor(out);
}

namespace {

void check_offsets(const Tensor& rows, std::span<const std::size_t> offsets) {
    if (offsets.empty() || offsets.front() != 0 || offsets.back() != rows.rows()) {
        throw std::invalid_argument("segment: offsets must run from 0 to " + std::to_string(rows.rows()));
    }
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        if (offsets[s] > offsets[s + 1]) throw std::invalid_argument("segment: offsets must be non-decreasing");
    }
}

}  // namespace

Tensor segment_reduce(const Tensor& rows, std::span<const std::size_t> offsets, SegmentReduce kind) {
    require_defined("segment_reduce", rows);
    check_offsets(rows, offsets);
    const std::size_t S = offsets.size() - 1, C = rows.cols();
    auto out = make_node(S, C);
    const Real* x = rows.node()->value.data();
    std::vector<std::size_t> arg;
    if (kind == SegmentReduce::Max) arg.assign(S * C, std::numeric_limits<std::size_t>::max());
    for (std::size_t s = 0; s < S; ++s) {
        const std::size_t b = offsets[s], e = offsets[s + 1];
        if (b == e) continue;
        for (std::size_t c = 0; c < C; ++c) {
            if (kind == SegmentReduce::Max) {
                std::size_t best = b;
                for (std::size_t r = b + 1; r < e; ++r) {
                    if (x[r * C + c] > x[best * C + c]) best = r;
                }
                arg[s * C + c] = best;
                out->value[s * C + c] = x[best * C + c];
            } else {
                Real sum = 0;
                for (std::size_t r = b; r < e; ++r) sum += x[r * C + c];
                out->value[s * C + c] = kind == SegmentReduce::Mean ? sum / Real(e - b) : sum;
            }
        }
    }
    if (tracking({&rows})) {
        auto in = rows.node();
        std::vector<std::size_t> offs(offsets.begin(), offsets.end());
        std::weak_ptr<TensorNode> weak = out;
        record(out, [in, weak, offs, arg, kind, S, C] {
            auto on = weak.lock();
            Real* g = in->grad_buffer();
            for (std::size_t s = 0; s < S; ++s) {
                const std::size_t b = offs[s], e = offs[s + 1];
                if (b == e) continue;
                for (std::size_t c = 0; c < C; ++c) {
                    const Real go = on->grad[s * C + c];
                    if (kind == SegmentReduce::Max) {
                        g[arg[s * C + c] * C + c] += go;
                    } else {
                        const Real w = kind == SegmentReduce::Mean ? Real(1) / Real(e - b) : Real(1);
                        for (std::size_t r = b; r < e; ++r) g[r * C + c] += go * w;
                    }
                }
            }
        });
    }
    return Tensor(out);
}

Tensor segment_softmax(const Tensor& rows, std::span<const std::size_t> offsets, const Tensor& tau) {
    require_defined("segment_softmax", rows);
    require_defined("segment_softmax", tau);
    check_offsets(rows, offsets);
    if (tau.size() != 1) throw std::invalid_argument("segment_softmax: tau must be 1x1, got " + tau.shape_str());
    const std::size_t S = offsets.size() - 1, C = rows.cols();
    const Real t = tau.item();
    auto out = make_node(S, C);
    const Real* x = rows.node()->value.data();
    std::vector<Real> weights(rows.size(), Real(0));
    for (std::size_t s = 0; s < S; ++s) {
        const std::size_t b = offsets[s], e = offsets[s + 1];
        if (b == e) continue;
        for (std::size_t c = 0; c < C; ++c) {
            Real mx = -std::numeric_limits<Real>::infinity();
            for (std::size_t r = b; r < e; ++r) mx = std::max(mx, t * x[r * C + c]);
            Real z = 0;
            for (std::size_t r = b; r < e; ++r) z += (weights[r * C + c] = std::exp(t * x[r * C + c] - mx));
            Real acc = 0;
            for (std::size_t r = b; r < e; ++r) {
                weights[r * C + c] /= z;
                acc += weights[r * C + c] * x[r * C + c];
            }
            out->value[s * C + c] = acc;
        }
    }
    if (tracking({&rows, &tau})) {
        auto in = rows.node(), tn = tau.node();
        std::vector<std::size_t> offs(offsets.begin(), offsets.end());
        std::weak_ptr<TensorNode> weak = out;
        record(out, [in, tn, weak, offs, weights, S, C, t] {
            auto on = weak.lock();
            Real* g = in->requires_grad ? in->grad_buffer() : nullptr;
            Real dtau = 0;
            const Real* x = in->value.data();
            for (std::size_t s = 0; s < S; ++s) {
                for (std::size_t c = 0; c < C; ++c) {
                    const Real go = on->grad[s * C + c];
                    const Real o = on->value[s * C + c];
                    for (std::size_t r = offs[s]; r < offs[s + 1]; ++r) {
                        const Real w = weights[r * C + c], m = x[r * C + c];
                        if (g) g[r * C + c] += go * w * (Real(1) + t * (m - o));
                        dtau += go * w * m * (m - o);
                    }
                }
            }
            if (tn->requires_grad) tn->grad_buffer()[0] += dtau;
        });
    }
    return Tensor(out);
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(std::span<Real> params, std::span<const Real> grads, AdamState& state, const AdamConfig& cfg) {
    if (grads.size() != params.size()) throw std::invalid_argument("adam_step: gradient size mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), Real(0));
        state.v.assign(params.size(), Real(0));
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = static_cast<Real>(cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g);
        state.v[i] = static_cast<Real>(cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g);
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= static_cast<Real>(cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
}

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), states_(params_.size()), cfg_(cfg) {}

void Adam::step() {
    std::vector<Real> zeros;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        std::span<const Real> g = p.grad();
        if (g.empty()) {
            zeros.assign(p.size(), Real(0));
            g = zeros;
        }
        adam_step(p.mutable_data(), g, states_[i], cfg_);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::ordered_json tensors_to_json(const NamedTensors& tensors) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [name, t] : tensors) {
        nlohmann::ordered_json entry;
        entry["shape"] = {t.rows(), t.cols()};
        entry["data"] = std::vector<Real>(t.data().begin(), t.data().end());
        j[name] = std::move(entry);
    }
    return j;
}

void tensors_from_json(const nlohmann::ordered_json& j, NamedTensors& tensors) {
    if (!j.is_object()) throw std::runtime_error("parameters: expected an object");
    for (auto& [name, t] : tensors) {
        if (!j.contains(name)) throw std::runtime_error("parameters: missing '" + name + "'");
        const auto& entry = j.at(name);
        auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols()) {
            throw std::runtime_error("parameters: shape mismatch for '" + name + "', expected " + t.shape_str());
        }
        auto data = entry.at("data").get<std::vector<Real>>();
        if (data.size() != t.size()) throw std::runtime_error("parameters: wrong value count for '" + name + "'");
        auto dst = t.mutable_data();
        std::copy(data.begin(), data.end(), dst.begin());
    }
    if (j.size() != tensors.size()) throw std::runtime_error("parameters: unexpected extra entries");
}

}  // namespace phil
