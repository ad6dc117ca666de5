#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"

namespace hyperl1 {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

class Tape;

// Dense row-major float64 tensor. Values are immutable once built; copies
// share the payload. A tensor participates in gradient tracking iff it
// carries a (tape, node) pair.
struct Tensor {
    Shape shape;
    std::shared_ptr<std::vector<double>> data;
    Tape* tape = nullptr;
    int node = -1;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> values)
        : shape(std::move(s)), data(std::make_shared<std::vector<double>>(std::move(values))) {
        if (data->size() != shape_size(shape))
            throw ShapeError("data length " + std::to_string(data->size()) +
                             " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s), std::vector<double>(shape_size(s), 0.0)); }
    static Tensor full(Shape s, double v) { return Tensor(std::move(s), std::vector<double>(shape_size(s), v)); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

    std::size_t size() const { return data ? data->size() : 0; }
    std::size_t rank() const { return shape.size(); }
    bool on_tape() const { return tape != nullptr && node >= 0; }

    const std::vector<double>& values() const { return *data; }
    double operator[](std::size_t i) const { return (*data)[i]; }
    double operator()(std::size_t i, std::size_t j) const { return (*data)[i * shape[1] + j]; }
    double item() const {
        if (size() != 1) throw UsageError("item() on non-scalar tensor " + shape_str(shape));
        return (*data)[0];
    }
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }
};

inline bool all_finite(const Tensor& t) {
    for (double v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

// Reverse-mode tape. Nodes are appended in execution order, so walking ids
// backwards visits the graph in reverse topological order exactly once.
// Backward closures receive their own node id to read the incoming gradient.
class Tape {
public:
    using BackFn = std::function<void(Tape&, int)>;

    int add_node(std::size_t size, BackFn back) {
        nodes_.push_back(Node{size, std::move(back)});
        grads_.emplace_back();
        return static_cast<int>(nodes_.size()) - 1;
    }

    Tensor leaf(Shape shape, std::vector<double> values) {
        Tensor t(std::move(shape), std::move(values));
        t.tape = this;
        t.node = add_node(t.size(), nullptr);
        return t;
    }

    Tensor leaf(const Tensor& value) {
        Tensor t = value;
        t.tape = this;
        t.node = add_node(t.size(), nullptr);
        return t;
    }

    std::vector<double>& grad_buf(int id) {
        auto& g = grads_[static_cast<std::size_t>(id)];
        if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(id)].size, 0.0);
        return g;
    }

    bool touched(int id) const { return !grads_[static_cast<std::size_t>(id)].empty(); }

    void backward(const Tensor& loss) {
        if (!loss.on_tape() || loss.tape != this)
            throw UsageError("backward: loss is not on a live tape");
        if (loss.size() != 1) throw UsageError("backward: loss must be scalar");
        grad_buf(loss.node)[0] += 1.0;
        for (int id = loss.node; id >= 0; --id) {
            if (!touched(id)) continue;
            auto& n = nodes_[static_cast<std::size_t>(id)];
            if (n.back) n.back(*this, id);
        }
    }

    const std::vector<double>& grad(const Tensor& t) {
        if (!t.on_tape() || t.tape != this) throw UsageError("grad: tensor is not on this tape");
        return grad_buf(t.node);
    }

    void reset() {
        nodes_.clear();
        grads_.clear();
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::size_t size;
        BackFn back;
    };
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
};

// ---------------------------------------------------------------------------
// Broadcast plumbing (trailing-axis rules only)
// ---------------------------------------------------------------------------

namespace detail {

struct BroadcastPlan {
    Shape out;
    std::vector<std::size_t> a_strides;
    std::vector<std::size_t> b_strides;
    bool same_shape = false;
};

inline std::vector<std::size_t> contiguous_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 0);
    std::size_t acc = 1;
    for (std::size_t i = s.size(); i-- > 0;) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

inline BroadcastPlan broadcast_plan(const Shape& a, const Shape& b) {
    BroadcastPlan p;
    if (a == b) {
        p.out = a;
        p.same_shape = true;
        return p;
    }
    const std::size_t rank = std::max(a.size(), b.size());
    Shape ap(rank, 1), bp(rank, 1);
    std::copy(a.begin(), a.end(), ap.begin() + static_cast<long>(rank - a.size()));
    std::copy(b.begin(), b.end(), bp.begin() + static_cast<long>(rank - b.size()));
    p.out.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        if (ap[i] != bp[i] && ap[i] != 1 && bp[i] != 1)
            throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        p.out[i] = std::max(ap[i], bp[i]);
    }
    p.a_strides = contiguous_strides(ap);
    p.b_strides = contiguous_strides(bp);
    for (std::size_t i = 0; i < rank; ++i) {
        if (ap[i] == 1 && p.out[i] != 1) p.a_strides[i] = 0;
        if (bp[i] == 1 && p.out[i] != 1) p.b_strides[i] = 0;
    }
    return p;
}

template <class F>
inline void for_each_pair(const BroadcastPlan& p, F&& f) {
    const std::size_t total = shape_size(p.out);
    if (p.same_shape) {
        for (std::size_t i = 0; i < total; ++i) f(i, i, i);
        return;
    }
    const std::size_t rank = p.out.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t offa = 0, offb = 0;
    for (std::size_t i = 0; i < total; ++i) {
        f(i, offa, offb);
        for (std::size_t d = rank; d-- > 0;) {
            idx[d]++;
            offa += p.a_strides[d];
            offb += p.b_strides[d];
            if (idx[d] < p.out[d]) break;
            offa -= p.a_strides[d] * p.out[d];
            offb -= p.b_strides[d] * p.out[d];
            idx[d] = 0;
        }
    }
}

inline Tape* joint_tape(const Tensor& a, const Tensor& b) {
    if (a.tape && b.tape && a.tape != b.tape)
        throw UsageError("operands live on different tapes");
    return a.on_tape() ? a.tape : (b.on_tape() ? b.tape : nullptr);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise primitives
// ---------------------------------------------------------------------------

inline double sigmoid_val(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline double silu_val(double x) { return x * sigmoid_val(x); }
inline double silu_grad_val(double x) {
    const double s = sigmoid_val(x);
    return s + x * s * (1.0 - s);
}
inline double softplus_val(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

namespace detail {

// grad_fn(x, y) -> dy/dx given input x and output y.
template <class Fv, class Fg>
inline Tensor unary_op(const Tensor& t, Fv&& value_fn, Fg&& grad_fn) {
    std::vector<double> out(t.size());
    const auto& x = *t.data;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = value_fn(x[i]);
    Tensor r(t.shape, std::move(out));
    if (t.on_tape()) {
        r.tape = t.tape;
        auto xin = t.data;
        auto yout = r.data;
        const int parent = t.node;
        auto g = std::forward<Fg>(grad_fn);
        r.node = t.tape->add_node(r.size(), [xin, yout, parent, g](Tape& tp, int self) {
            const auto& go = tp.grad_buf(self);
            auto& gp = tp.grad_buf(parent);
            for (std::size_t i = 0; i < go.size(); ++i)
                gp[i] += go[i] * g((*xin)[i], (*yout)[i]);
        });
    }
    return r;
}

}  // namespace detail

inline Tensor silu(const Tensor& t) {
    return detail::unary_op(t, [](double x) { return silu_val(x); },
                            [](double x, double) { return silu_grad_val(x); });
}
inline Tensor sigmoid(const Tensor& t) {
    return detail::unary_op(t, [](double x) { return sigmoid_val(x); },
                            [](double, double y) { return y * (1.0 - y); });
}
inline Tensor relu(const Tensor& t) {
    return detail::unary_op(t, [](double x) { return x > 0 ? x : 0.0; },
                            [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}
inline Tensor exp(const Tensor& t) {
    return detail::unary_op(t, [](double x) { return std::exp(x); },
                            [](double, double y) { return y; });
}
inline Tensor log(const Tensor& t) {
    for (double v : t.values())
        if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
    return detail::unary_op(t, [](double x) { return std::log(x); },
                            [](double x, double) { return 1.0 / x; });
}
inline Tensor neg(const Tensor& t) {
    return detail::unary_op(t, [](double x) { return -x; }, [](double, double) { return -1.0; });
}
inline Tensor square(const Tensor& t) {
    return detail::unary_op(t, [](double x) { return x * x; },
                            [](double x, double) { return 2.0 * x; });
}
inline Tensor softplus(const Tensor& t) {
    return detail::unary_op(t, [](double x) { return softplus_val(x); },
                            [](double x, double) { return sigmoid_val(x); });
}

// ---------------------------------------------------------------------------
// Elementwise binary with broadcasting
// ---------------------------------------------------------------------------

namespace detail {

// fv(a,b) -> out; fga/fgb(a,b) -> partials
template <class Fv, class Fga, class Fgb>
inline Tensor binary_op(const Tensor& a, const Tensor& b, Fv&& fv, Fga&& fga, Fgb&& fgb) {
    auto plan = broadcast_plan(a.shape, b.shape);
    std::vector<double> out(shape_size(plan.out));
    const auto& av = *a.data;
    const auto& bv = *b.data;
    for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        out[i] = fv(av[ia], bv[ib]);
    });
    Tensor r(plan.out, std::move(out));
    Tape* tape = joint_tape(a, b);
    if (tape) {
        r.tape = tape;
        auto adata = a.data;
        auto bdata = b.data;
        const int pa = a.on_tape() ? a.node : -1;
        const int pb = b.on_tape() ? b.node : -1;
        auto ga = std::forward<Fga>(fga);
        auto gb = std::forward<Fgb>(fgb);
        r.node = tape->add_node(r.size(), [plan, adata, bdata, pa, pb, ga, gb](Tape& tp, int self) {
            const auto& go = tp.grad_buf(self);
            const auto& av2 = *adata;
            const auto& bv2 = *bdata;
            std::vector<double>* gpa = pa >= 0 ? &tp.grad_buf(pa) : nullptr;
            std::vector<double>* gpb = pb >= 0 ? &tp.grad_buf(pb) : nullptr;
            for_each_pair(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                if (gpa) (*gpa)[ia] += go[i] * ga(av2[ia], bv2[ib]);
                if (gpb) (*gpb)[ib] += go[i] * gb(av2[ia], bv2[ib]);
            });
        });
    }
    return r;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_op(a, b, [](double x, double y) { return x + y; },
                             [](double, double) { return 1.0; },
                             [](double, double) { return 1.0; });
}
inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_op(a, b, [](double x, double y) { return x - y; },
                             [](double, double) { return 1.0; },
                             [](double, double) { return -1.0; });
}
inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_op(a, b, [](double x, double y) { return x * y; },
                             [](double, double y) { return y; },
                             [](double x, double) { return x; });
}
// Division by zero yields non-finite values rather than throwing; callers
// check all_finite() where it matters.
inline Tensor div(const Tensor& a, const Tensor& b) {
    return detail::binary_op(a, b, [](double x, double y) { return x / y; },
                             [](double, double y) { return 1.0 / y; },
                             [](double x, double y) { return -x / (y * y); });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator+(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }
inline Tensor operator+(double c, const Tensor& a) { return add(Tensor::scalar(c), a); }
inline Tensor operator-(const Tensor& a, double c) { return sub(a, Tensor::scalar(c)); }
inline Tensor operator-(double c, const Tensor& a) { return sub(Tensor::scalar(c), a); }
inline Tensor operator*(const Tensor& a, double c) { return mul(a, Tensor::scalar(c)); }
inline Tensor operator*(double c, const Tensor& a) { return mul(Tensor::scalar(c), a); }
inline Tensor operator/(const Tensor& a, double c) { return div(a, Tensor::scalar(c)); }

// ---------------------------------------------------------------------------
// Matrix product (2-D)
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul requires rank-2 operands, got " + shape_str(a.shape) + " and " +
                         shape_str(b.shape));
    const std::size_t m = a.shape[0], k = a.shape[1], k2 = b.shape[0], n = b.shape[1];
    if (k != k2)
        throw ShapeError("matmul inner axes disagree: " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
    std::vector<double> out(m * n, 0.0);
    const auto& av = *a.data;
    const auto& bv = *b.data;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = bv.data() + p * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    Tensor r(Shape{m, n}, std::move(out));
    Tape* tape = detail::joint_tape(a, b);
    if (tape) {
        r.tape = tape;
        auto adata = a.data;
        auto bdata = b.data;
        const int pa = a.on_tape() ? a.node : -1;
        const int pb = b.on_tape() ? b.node : -1;
        r.node = tape->add_node(r.size(), [m, k, n, adata, bdata, pa, pb](Tape& tp, int self) {
            const auto& go = tp.grad_buf(self);
            if (pa >= 0) {
                auto& ga = tp.grad_buf(pa);
                const auto& bv2 = *bdata;
                // dA = G * B^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        const double* grow = go.data() + i * n;
                        const double* brow = bv2.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga[i * k + p] += acc;
                    }
            }
            if (pb >= 0) {
                auto& gb = tp.grad_buf(pb);
                const auto& av2 = *adata;
                // dB = A^T * G
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t i = 0; i < m; ++i) {
                        const double aip = av2[i * k + p];
                        if (aip == 0.0) continue;
                        const double* grow = go.data() + i * n;
                        double* gbrow = gb.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                    }
            }
        });
    }
    return r;
}

inline Tensor transpose(const Tensor& t) {
    if (t.rank() != 2) throw ShapeError("transpose requires rank-2, got " + shape_str(t.shape));
    const std::size_t m = t.shape[0], n = t.shape[1];
    std::vector<double> out(m * n);
    const auto& v = *t.data;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
    Tensor r(Shape{n, m}, std::move(out));
    if (t.on_tape()) {
        r.tape = t.tape;
        const int parent = t.node;
        r.node = t.tape->add_node(r.size(), [m, n, parent](Tape& tp, int self) {
            const auto& go = tp.grad_buf(self);
            auto& gp = tp.grad_buf(parent);
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t i = 0; i < m; ++i) gp[i * n + j] += go[j * m + i];
        });
    }
    return r;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

enum class Reduce { Sum, Mean, Max, Min, Median };

namespace detail {

struct AxisSplit {
    std::size_t outer, len, inner;
};

inline AxisSplit axis_split(const Shape& s, std::size_t axis) {
    if (axis >= s.size()) throw ShapeError("reduce axis " + std::to_string(axis) +
                                           " out of range for " + shape_str(s));
    AxisSplit sp{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) sp.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) sp.inner *= s[i];
    return sp;
}

}  // namespace detail

// Reduce along `axis`, or over all elements when axis is nullopt. The median
// of an even-length slice is the midpoint of the two central order statistics.
inline Tensor reduce(const Tensor& t, std::optional<std::size_t> axis, Reduce kind) {
    Shape in_shape = t.shape;
    std::size_t ax;
    Tensor flat = t;
    if (!axis.has_value()) {
        flat.shape = Shape{t.size()};
        ax = 0;
    } else {
        ax = *axis;
    }
    const auto sp = detail::axis_split(flat.shape, ax);
    if (sp.len == 0) throw DomainError("reduce over empty axis");
    Shape out_shape;
    for (std::size_t i = 0; i < flat.shape.size(); ++i)
        if (i != ax) out_shape.push_back(flat.shape[i]);
    if (out_shape.empty()) out_shape = Shape{1};

    const auto& v = *t.data;
    std::vector<double> out(sp.outer * sp.inner);
    // For Max/Min we remember the chosen slot; for Median the two central ones.
    std::vector<std::size_t> sel_a, sel_b;
    const bool track_one = kind == Reduce::Max || kind == Reduce::Min;
    const bool track_two = kind == Reduce::Median;
    if (track_one || track_two) sel_a.resize(out.size());
    if (track_two) sel_b.resize(out.size());

    std::vector<std::size_t> order;
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t oi = o * sp.inner + i;
            auto at = [&](std::size_t j) { return v[(o * sp.len + j) * sp.inner + i]; };
            switch (kind) {
                case Reduce::Sum:
                case Reduce::Mean: {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < sp.len; ++j) acc += at(j);
                    out[oi] = kind == Reduce::Mean ? acc / static_cast<double>(sp.len) : acc;
                    break;
                }
                case Reduce::Max: {
                    double best = at(0);
                    std::size_t bj = 0;
                    for (std::size_t j = 1; j < sp.len; ++j)
                        if (at(j) > best) { best = at(j); bj = j; }
                    out[oi] = best;
                    sel_a[oi] = bj;
                    break;
                }
                case Reduce::Min: {
                    double best = at(0);
                    std::size_t bj = 0;
                    for (std::size_t j = 1; j < sp.len; ++j)
                        if (at(j) < best) { best = at(j); bj = j; }
                    out[oi] = best;
                    sel_a[oi] = bj;
                    break;
                }
                case Reduce::Median: {
                    order.resize(sp.len);
                    std::iota(order.begin(), order.end(), std::size_t{0});
                    std::sort(order.begin(), order.end(),
                              [&](std::size_t x, std::size_t y) { return at(x) < at(y); });
                    if (sp.len % 2 == 1) {
                        const std::size_t mid = order[sp.len / 2];
                        out[oi] = at(mid);
                        sel_a[oi] = mid;
                        sel_b[oi] = mid;
                    } else {
                        const std::size_t lo = order[sp.len / 2 - 1], hi = order[sp.len / 2];
                        out[oi] = 0.5 * (at(lo) + at(hi));
                        sel_a[oi] = lo;
                        sel_b[oi] = hi;
                    }
                    break;
                }
            }
        }
    }
    Tensor r(out_shape, std::move(out));
    if (t.on_tape()) {
        r.tape = t.tape;
        const int parent = t.node;
        r.node = t.tape->add_node(
            r.size(), [sp, kind, parent, sel_a, sel_b](Tape& tp, int self) {
                const auto& go = tp.grad_buf(self);
                auto& gp = tp.grad_buf(parent);
                for (std::size_t o = 0; o < sp.outer; ++o)
                    for (std::size_t i = 0; i < sp.inner; ++i) {
                        const std::size_t oi = o * sp.inner + i;
                        auto slot = [&](std::size_t j) -> double& {
                            return gp[(o * sp.len + j) * sp.inner + i];
                        };
                        switch (kind) {
                            case Reduce::Sum:
                                for (std::size_t j = 0; j < sp.len; ++j) slot(j) += go[oi];
                                break;
                            case Reduce::Mean:
                                for (std::size_t j = 0; j < sp.len; ++j)
                                    slot(j) += go[oi] / static_cast<double>(sp.len);
                                break;
                            case Reduce::Max:
                            case Reduce::Min:
                                slot(sel_a[oi]) += go[oi];
                                break;
                            case Reduce::Median:
                                if (sel_a[oi] == sel_b[oi]) {
                                    slot(sel_a[oi]) += go[oi];
                                } else {
                                    slot(sel_a[oi]) += 0.5 * go[oi];
                                    slot(sel_b[oi]) += 0.5 * go[oi];
                                }
                                break;
                        }
                    }
            });
    }
    (void)in_shape;
    return r;
}

inline Tensor sum(const Tensor& t) { return reduce(t, std::nullopt, Reduce::Sum); }
inline Tensor mean(const Tensor& t) { return reduce(t, std::nullopt, Reduce::Mean); }

// ---------------------------------------------------------------------------
// Softmax (numerically stabilized by max subtraction)
// ---------------------------------------------------------------------------

inline Tensor softmax(const Tensor& t, std::size_t axis) {
    const auto sp = detail::axis_split(t.shape, axis);
    if (sp.len == 0) throw DomainError("softmax over empty axis");
    const auto& v = *t.data;
    std::vector<double> out(t.size());
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < sp.inner; ++i) {
            auto idx = [&](std::size_t j) { return (o * sp.len + j) * sp.inner + i; };
            double mx = v[idx(0)];
            for (std::size_t j = 1; j < sp.len; ++j) mx = std::max(mx, v[idx(j)]);
            double denom = 0.0;
            for (std::size_t j = 0; j < sp.len; ++j) {
                out[idx(j)] = std::exp(v[idx(j)] - mx);
                denom += out[idx(j)];
            }
            for (std::size_t j = 0; j < sp.len; ++j) out[idx(j)] /= denom;
        }
    Tensor r(t.shape, std::move(out));
    if (t.on_tape()) {
        r.tape = t.tape;
        const int parent = t.node;
        auto sdata = r.data;
        r.node = t.tape->add_node(r.size(), [sp, parent, sdata](Tape& tp, int self) {
            const auto& go = tp.grad_buf(self);
            auto& gp = tp.grad_buf(parent);
            const auto& s = *sdata;
            for (std::size_t o = 0; o < sp.outer; ++o)
                for (std::size_t i = 0; i < sp.inner; ++i) {
                    auto idx = [&](std::size_t j) { return (o * sp.len + j) * sp.inner + i; };
                    double dot = 0.0;
                    for (std::size_t j = 0; j < sp.len; ++j) dot += go[idx(j)] * s[idx(j)];
                    for (std::size_t j = 0; j < sp.len; ++j)
                        gp[idx(j)] += s[idx(j)] * (go[idx(j)] - dot);
                }
        });
    }
    return r;
}

// ---------------------------------------------------------------------------
// Concat / slice / gather / reshape
// ---------------------------------------------------------------------------

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat of empty list");
    const Shape& ref = parts[0].shape;
    if (axis >= ref.size()) throw ShapeError("concat axis out of range");
    std::size_t axis_total = 0;
    for (const auto& p : parts) {
        if (p.rank() != ref.size()) throw ShapeError("concat rank mismatch");
        for (std::size_t d = 0; d < ref.size(); ++d)
            if (d != axis && p.shape[d] != ref[d])
                throw ShapeError("concat non-axis extent mismatch at axis " + std::to_string(d));
        axis_total += p.shape[axis];
    }
    Shape out_shape = ref;
    out_shape[axis] = axis_total;
    const auto osp = detail::axis_split(out_shape, axis);
    std::vector<double> out(shape_size(out_shape));
    std::size_t pos = 0;
    std::vector<std::size_t> offsets(parts.size());
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        offsets[pi] = pos;
        const auto& p = parts[pi];
        const std::size_t plen = p.shape[axis];
        const auto& pv = *p.data;
        for (std::size_t o = 0; o < osp.outer; ++o)
            for (std::size_t j = 0; j < plen; ++j)
                std::copy_n(pv.data() + (o * plen + j) * osp.inner, osp.inner,
                            out.data() + (o * osp.len + pos + j) * osp.inner);
        pos += plen;
    }
    Tensor r(out_shape, std::move(out));
    Tape* tape = nullptr;
    for (const auto& p : parts)
        if (p.on_tape()) {
            if (tape && tape != p.tape) throw UsageError("concat operands on different tapes");
            tape = p.tape;
        }
    if (tape) {
        r.tape = tape;
        std::vector<int> pnodes(parts.size(), -1);
        std::vector<std::size_t> plens(parts.size());
        for (std::size_t pi = 0; pi < parts.size(); ++pi) {
            pnodes[pi] = parts[pi].on_tape() ? parts[pi].node : -1;
            plens[pi] = parts[pi].shape[axis];
        }
        r.node = tape->add_node(r.size(), [osp, pnodes, plens, offsets](Tape& tp, int self) {
            const auto& go = tp.grad_buf(self);
            for (std::size_t pi = 0; pi < pnodes.size(); ++pi) {
                if (pnodes[pi] < 0) continue;
                auto& gp = tp.grad_buf(pnodes[pi]);
                for (std::size_t o = 0; o < osp.outer; ++o)
                    for (std::size_t j = 0; j < plens[pi]; ++j) {
                        const double* src = go.data() + (o * osp.len + offsets[pi] + j) * osp.inner;
                        double* dst = gp.data() + (o * plens[pi] + j) * osp.inner;
                        for (std::size_t i = 0; i < osp.inner; ++i) dst[i] += src[i];
                    }
            }
        });
    }
    return r;
}

inline Tensor slice(const Tensor& t, std::size_t axis, std::size_t begin, std::size_t end) {
    if (axis >= t.rank()) throw ShapeError("slice axis out of range");
    if (begin > end || end > t.shape[axis])
        throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for axis extent " + std::to_string(t.shape[axis]));
    const auto sp = detail::axis_split(t.shape, axis);
    const std::size_t len = end - begin;
    Shape out_shape = t.shape;
    out_shape[axis] = len;
    std::vector<double> out(shape_size(out_shape));
    const auto& v = *t.data;
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t j = 0; j < len; ++j)
            std::copy_n(v.data() + (o * sp.len + begin + j) * sp.inner, sp.inner,
                        out.data() + (o * len + j) * sp.inner);
    Tensor r(out_shape, std::move(out));
    if (t.on_tape()) {
        r.tape = t.tape;
        const int parent = t.node;
        r.node = t.tape->add_node(r.size(), [sp, begin, len, parent](Tape& tp, int self) {
            const auto& go = tp.grad_buf(self);
            auto& gp = tp.grad_buf(parent);
            for (std::size_t o = 0; o < sp.outer; ++o)
                for (std::size_t j = 0; j < len; ++j) {
                    const double* src = go.data() + (o * len + j) * sp.inner;
                    double* dst = gp.data() + (o * sp.len + begin + j) * sp.inner;
                    for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
                }
        });
    }
    return r;
}

// Row gather on a rank-2 tensor; indices may repeat (gradient scatter-adds).
inline Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& indices) {
    if (t.rank() != 2) throw ShapeError("gather_rows requires rank-2, got " + shape_str(t.shape));
    const std::size_t n = t.shape[0], c = t.shape[1];
    std::vector<double> out(indices.size() * c);
    const auto& v = *t.data;
    for (std::size_t r0 = 0; r0 < indices.size(); ++r0) {
        if (indices[r0] >= n) throw ShapeError("gather_rows index out of range");
        std::copy_n(v.data() + indices[r0] * c, c, out.data() + r0 * c);
    }
    Tensor r(Shape{indices.size(), c}, std::move(out));
    if (t.on_tape()) {
        r.tape = t.tape;
        const int parent = t.node;
        r.node = t.tape->add_node(r.size(), [indices, c, parent](Tape& tp, int self) {
            const auto& go = tp.grad_buf(self);
            auto& gp = tp.grad_buf(parent);
            for (std::size_t r0 = 0; r0 < indices.size(); ++r0) {
                const double* src = go.data() + r0 * c;
                double* dst = gp.data() + indices[r0] * c;
                for (std::size_t i = 0; i < c; ++i) dst[i] += src[i];
            }
        });
    }
    return r;
}

inline Tensor reshape(const Tensor& t, Shape new_shape) {
    if (shape_size(new_shape) != t.size())
        throw ShapeError("reshape " + shape_str(t.shape) + " -> " + shape_str(new_shape) +
                         " changes element count");
    Tensor r(std::move(new_shape), *t.data);
    if (t.on_tape()) {
        r.tape = t.tape;
        const int parent = t.node;
        r.node = t.tape->add_node(r.size(), [parent](Tape& tp, int self) {
            const auto& go = tp.grad_buf(self);
            auto& gp = tp.grad_buf(parent);
            for (std::size_t i = 0; i < go.size(); ++i) gp[i] += go[i];
        });
    }
    return r;
}

}  // namespace hyperl1
