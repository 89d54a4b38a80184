#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "peace/rng.hpp"

namespace peace {

using i64 = std::int64_t;
using Shape = std::vector<i64>;

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline i64 numel_of(const Shape& s) {
    i64 n = 1;
    for (i64 d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string r = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) r += ",";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void()> backward_fn;

    i64 numel() const { return static_cast<i64>(data.size()); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

inline bool& grad_mode() {
    thread_local bool on = true;
    return on;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGradGuard() { grad_mode() = prev; }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> p) : p_(std::move(p)) {}

    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
        check(numel_of(shape) == static_cast<i64>(values.size()),
              "tensor: data length does not match shape " + shape_str(shape));
        auto p = std::make_shared<TensorImpl>();
        p->shape = std::move(shape);
        p->data = std::move(values);
        p->requires_grad = requires_grad;
        return Tensor(p);
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<double> v(static_cast<std::size_t>(numel_of(shape)), 0.0);
        return from(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        std::vector<double> v(static_cast<std::size_t>(numel_of(shape)), value);
        return from(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return from({1}, {value}, requires_grad);
    }

    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0, bool requires_grad = false) {
        std::vector<double> v(static_cast<std::size_t>(numel_of(shape)));
        for (auto& x : v) x = rng.normal() * stddev;
        return from(std::move(shape), std::move(v), requires_grad);
    }

    bool defined() const { return static_cast<bool>(p_); }
    const Shape& shape() const { return p_->shape; }
    int rank() const { return static_cast<int>(p_->shape.size()); }
    i64 numel() const { return p_->numel(); }

    i64 dim(int i) const {
        const int r = rank();
        if (i < 0) i += r;
        check(i >= 0 && i < r, "tensor: dim index out of range");
        return p_->shape[static_cast<std::size_t>(i)];
    }

    std::vector<double>& data() { return p_->data; }
    const std::vector<double>& data() const { return p_->data; }
    std::vector<double>& grad() {
        p_->ensure_grad();
        return p_->grad;
    }
    bool requires_grad() const { return p_->requires_grad; }

    double item() const {
        check(numel() == 1, "tensor: item() requires a single element");
        return p_->data[0];
    }

    double at(std::initializer_list<i64> idx) const {
        check(static_cast<int>(idx.size()) == rank(), "tensor: at() rank mismatch");
        i64 off = 0;
        auto it = idx.begin();
        for (int i = 0; i < rank(); ++i, ++it) off = off * p_->shape[static_cast<std::size_t>(i)] + *it;
        return p_->data[static_cast<std::size_t>(off)];
    }

    void zero_grad() {
        p_->grad.assign(p_->data.size(), 0.0);
    }

    std::shared_ptr<TensorImpl> impl() const { return p_; }

    void backward() const {
        check(numel() == 1, "backward: root must be scalar");
        std::vector<TensorImpl*> order;
        std::unordered_set<TensorImpl*> seen;
        std::vector<std::pair<TensorImpl*, std::size_t>> stack;
        stack.emplace_back(p_.get(), 0);
        seen.insert(p_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                TensorImpl* par = node->parents[next].get();
                ++next;
                if (par->requires_grad && !seen.count(par)) {
                    seen.insert(par);
                    stack.emplace_back(par, 0);
                }
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
        p_->ensure_grad();
        p_->grad[0] = 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if ((*it)->backward_fn) (*it)->backward_fn();
        }
    }

private:
    std::shared_ptr<TensorImpl> p_;
};

namespace detail {

inline std::shared_ptr<TensorImpl> alloc(Shape shape) {
    auto p = std::make_shared<TensorImpl>();
    p->data.assign(static_cast<std::size_t>(numel_of(shape)), 0.0);
    p->shape = std::move(shape);
    return p;
}

inline bool suffix_of(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    const std::size_t off = big.size() - small.size();
    for (std::size_t i = 0; i < small.size(); ++i)
        if (small[i] != big[off + i]) return false;
    return true;
}

// Decompose a contiguous tensor around `axis`: index = (o * len + a) * inner + i.
struct AxisView {
    i64 outer, len, inner;
};

inline AxisView axis_view(const Shape& s, int axis) {
    const int r = static_cast<int>(s.size());
    if (axis < 0) axis += r;
    check(axis >= 0 && axis < r, "axis out of range for shape " + shape_str(s));
    AxisView v{1, s[static_cast<std::size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) v.outer *= s[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < r; ++i) v.inner *= s[static_cast<std::size_t>(i)];
    return v;
}

inline Shape drop_axis(const Shape& s, int axis) {
    const int r = static_cast<int>(s.size());
    if (axis < 0) axis += r;
    Shape out;
    for (int i = 0; i < r; ++i)
        if (i != axis) out.push_back(s[static_cast<std::size_t>(i)]);
    if (out.empty()) out.push_back(1);
    return out;
}

// C[m,n] (+)= A[m,k] * B[k,n]
inline void mm_nn(const double* A, const double* B, double* C, i64 m, i64 k, i64 n, bool acc) {
    for (i64 i = 0; i < m; ++i) {
        double* c = C + i * n;
        if (!acc) std::fill(c, c + n, 0.0);
        const double* a = A + i * k;
        for (i64 p = 0; p < k; ++p) {
            const double av = a[p];
            const double* b = B + p * n;
            for (i64 j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
inline void mm_nt(const double* A, const double* B, double* C, i64 m, i64 n, i64 k, bool acc) {
    for (i64 i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (i64 j = 0; j < n; ++j) {
            const double* b = B + j * k;
            double s = 0.0;
            for (i64 p = 0; p < k; ++p) s += a[p] * b[p];
            if (acc) c[j] += s; else c[j] = s;
        }
    }
}

// C[k,n] (+)= A[m,k]^T * B[m,n]
inline void mm_tn(const double* A, const double* B, double* C, i64 m, i64 k, i64 n, bool acc) {
    if (!acc) std::fill(C, C + k * n, 0.0);
    for (i64 p = 0; p < m; ++p) {
        const double* a = A + p * k;
        const double* b = B + p * n;
        for (i64 i = 0; i < k; ++i) {
            const double av = a[i];
            double* c = C + i * n;
            for (i64 j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

}  // namespace detail

// ---- elementwise ----

template <typename F, typename DFA, typename DFB>
Tensor ew_binary(const Tensor& a, const Tensor& b, F f, DFA dfa, DFB dfb, const char* name) {
    const bool a_big = a.numel() >= b.numel();
    const Tensor& big = a_big ? a : b;
    const Tensor& small = a_big ? b : a;
    check(small.numel() == 1 || detail::suffix_of(small.shape(), big.shape()),
          std::string(name) + ": shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()) +
              " (suffix broadcast only)");
    auto out = detail::alloc(big.shape());
    const i64 n = big.numel();
    const i64 sn = small.numel();
    const double* A = a.data().data();
    const double* B = b.data().data();
    const i64 an = a.numel(), bn = b.numel();
    for (i64 i = 0; i < n; ++i)
        out->data[static_cast<std::size_t>(i)] = f(A[i % an], B[i % bn]);
    (void)sn;
    if (grad_mode() && (a.requires_grad() || b.requires_grad())) {
        out->requires_grad = true;
        out->parents = {a.impl(), b.impl()};
        auto ai = a.impl();
        auto bi = b.impl();
        TensorImpl* oi = out.get();
        out->backward_fn = [ai, bi, oi, dfa, dfb, an, bn, n]() {
            const double* u = oi->grad.data();
            const double* A = ai->data.data();
            const double* B = bi->data.data();
            if (ai->requires_grad) {
                ai->ensure_grad();
                double* g = ai->grad.data();
                for (i64 i = 0; i < n; ++i) g[i % an] += u[i] * dfa(A[i % an], B[i % bn]);
            }
            if (bi->requires_grad) {
                bi->ensure_grad();
                double* g = bi->grad.data();
                for (i64 i = 0; i < n; ++i) g[i % bn] += u[i] * dfb(A[i % an], B[i % bn]);
            }
        };
    }
    return Tensor(out);
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    return ew_binary(
        a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; }, "add");
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return ew_binary(
        a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; }, "sub");
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return ew_binary(
        a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; }, "mul");
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    return ew_binary(
        a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); }, "div");
}

template <typename F, typename DF>
Tensor ew_unary(const Tensor& a, F f, DF df) {
    auto out = detail::alloc(a.shape());
    const i64 n = a.numel();
    const double* A = a.data().data();
    for (i64 i = 0; i < n; ++i) out->data[static_cast<std::size_t>(i)] = f(A[i]);
    if (grad_mode() && a.requires_grad()) {
        out->requires_grad = true;
        out->parents = {a.impl()};
        auto ai = a.impl();
        TensorImpl* oi = out.get();
        out->backward_fn = [ai, oi, df, n]() {
            ai->ensure_grad();
            const double* u = oi->grad.data();
            const double* A = ai->data.data();
            double* g = ai->grad.data();
            for (i64 i = 0; i < n; ++i) g[i] += u[i] * df(A[i]);
        };
    }
    return Tensor(out);
}

inline Tensor relu(const Tensor& a) {
    return ew_unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return ew_unary(
        a, [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [=](double x) {
            return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
        });
}

inline Tensor logt(const Tensor& a) {
    return ew_unary(
        a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

inline Tensor expt(const Tensor& a) {
    return ew_unary(
        a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

inline Tensor sigmoid(const Tensor& a) {
    auto sg = [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); };
    return ew_unary(a, sg, [sg](double x) {
        const double s = sg(x);
        return s * (1.0 - s);
    });
}

inline Tensor scale(const Tensor& a, double c) {
    return ew_unary(
        a, [c](double x) { return c * x; }, [c](double) { return c; });
}

inline Tensor add_const(const Tensor& a, double c) {
    return ew_unary(
        a, [c](double x) { return x + c; }, [](double) { return 1.0; });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0); }

// ---- shape ops ----

inline Tensor reshape(const Tensor& a, Shape shape) {
    check(numel_of(shape) == a.numel(),
          "reshape: element count mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
    auto out = detail::alloc(shape);
    out->data = a.data();
    if (grad_mode() && a.requires_grad()) {
        out->requires_grad = true;
        out->parents = {a.impl()};
        auto ai = a.impl();
        TensorImpl* oi = out.get();
        out->backward_fn = [ai, oi]() {
            ai->ensure_grad();
            const i64 n = oi->numel();
            for (i64 i = 0; i < n; ++i) ai->grad[static_cast<std::size_t>(i)] += oi->grad[static_cast<std::size_t>(i)];
        };
    }
    return Tensor(out);
}

inline Tensor transpose(const Tensor& a, const std::vector<int>& perm) {
    const int r = a.rank();
    check(static_cast<int>(perm.size()) == r, "transpose: perm rank mismatch");
    Shape out_shape(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) out_shape[static_cast<std::size_t>(i)] = a.dim(perm[static_cast<std::size_t>(i)]);
    auto out = detail::alloc(out_shape);

    std::vector<i64> in_strides(static_cast<std::size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i)
        in_strides[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(i + 1)] * a.dim(i + 1);
    // stride of output dim i in the input layout
    std::vector<i64> map_strides(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) map_strides[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];

    const i64 n = a.numel();
    std::vector<i64> src_index(static_cast<std::size_t>(n));
    {
        std::vector<i64> idx(static_cast<std::size_t>(r), 0);
        for (i64 lin = 0; lin < n; ++lin) {
            i64 src = 0;
            for (int i = 0; i < r; ++i) src += idx[static_cast<std::size_t>(i)] * map_strides[static_cast<std::size_t>(i)];
            src_index[static_cast<std::size_t>(lin)] = src;
            out->data[static_cast<std::size_t>(lin)] = a.data()[static_cast<std::size_t>(src)];
            for (int i = r - 1; i >= 0; --i) {
                if (++idx[static_cast<std::size_t>(i)] < out_shape[static_cast<std::size_t>(i)]) break;
                idx[static_cast<std::size_t>(i)] = 0;
            }
        }
    }
    if (grad_mode() && a.requires_grad()) {
        out->requires_grad = true;
        out->parents = {a.impl()};
        auto ai = a.impl();
        TensorImpl* oi = out.get();
        auto src = std::make_shared<std::vector<i64>>(std::move(src_index));
        out->backward_fn = [ai, oi, src]() {
            ai->ensure_grad();
            const i64 n = oi->numel();
            for (i64 i = 0; i < n; ++i)
                ai->grad[static_cast<std::size_t>((*src)[static_cast<std::size_t>(i)])] += oi->grad[static_cast<std::size_t>(i)];
        };
    }
    return Tensor(out);
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    check(!parts.empty(), "concat: empty input");
    const int r = parts[0].rank();
    if (axis < 0) axis += r;
    check(axis >= 0 && axis < r, "concat: axis out of range");
    Shape out_shape = parts[0].shape();
    i64 total = 0;
    for (const auto& p : parts) {
        check(p.rank() == r, "concat: rank mismatch");
        for (int i = 0; i < r; ++i)
            if (i != axis) check(p.dim(i) == out_shape[static_cast<std::size_t>(i)], "concat: shape mismatch");
        total += p.dim(axis);
    }
    out_shape[static_cast<std::size_t>(axis)] = total;
    auto out = detail::alloc(out_shape);
    const auto ov = detail::axis_view(out_shape, axis);
    bool any_grad = false;
    i64 off = 0;
    std::vector<i64> offsets;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const auto pv = detail::axis_view(p.shape(), axis);
        for (i64 o = 0; o < pv.outer; ++o) {
            const double* srcp = p.data().data() + o * pv.len * pv.inner;
            double* dstp = out->data.data() + (o * ov.len + off) * ov.inner;
            std::copy(srcp, srcp + pv.len * pv.inner, dstp);
        }
        off += p.dim(axis);
        if (p.requires_grad()) any_grad = true;
    }
    if (grad_mode() && any_grad) {
        out->requires_grad = true;
        for (const auto& p : parts) out->parents.push_back(p.impl());
        TensorImpl* oi = out.get();
        auto impls = out->parents;
        auto offs = std::make_shared<std::vector<i64>>(std::move(offsets));
        out->backward_fn = [impls, oi, offs, ov, axis]() {
            for (std::size_t pi = 0; pi < impls.size(); ++pi) {
                auto& par = impls[pi];
                if (!par->requires_grad) continue;
                par->ensure_grad();
                const auto pv = detail::axis_view(par->shape, axis);
                const i64 off = (*offs)[pi];
                for (i64 o = 0; o < pv.outer; ++o) {
                    const double* srcp = oi->grad.data() + (o * ov.len + off) * ov.inner;
                    double* dstp = par->grad.data() + o * pv.len * pv.inner;
                    for (i64 i = 0; i < pv.len * pv.inner; ++i) dstp[i] += srcp[i];
                }
            }
        };
    }
    return Tensor(out);
}

inline Tensor slice(const Tensor& a, int axis, i64 start, i64 stop) {
    const int r = a.rank();
    if (axis < 0) axis += r;
    check(axis >= 0 && axis < r, "slice: axis out of range");
    check(start >= 0 && stop <= a.dim(axis) && start < stop, "slice: bad range");
    Shape out_shape = a.shape();
    out_shape[static_cast<std::size_t>(axis)] = stop - start;
    auto out = detail::alloc(out_shape);
    const auto av = detail::axis_view(a.shape(), axis);
    const i64 len = stop - start;
    for (i64 o = 0; o < av.outer; ++o) {
        const double* srcp = a.data().data() + (o * av.len + start) * av.inner;
        double* dstp = out->data.data() + o * len * av.inner;
        std::copy(srcp, srcp + len * av.inner, dstp);
    }
    if (grad_mode() && a.requires_grad()) {
        out->requires_grad = true;
        out->parents = {a.impl()};
        auto ai = a.impl();
        TensorImpl* oi = out.get();
        out->backward_fn = [ai, oi, av, start, len]() {
            ai->ensure_grad();
            for (i64 o = 0; o < av.outer; ++o) {
                const double* srcp = oi->grad.data() + o * len * av.inner;
                double* dstp = ai->grad.data() + (o * av.len + start) * av.inner;
                for (i64 i = 0; i < len * av.inner; ++i) dstp[i] += srcp[i];
            }
        };
    }
    return Tensor(out);
}

inline Tensor gather_rows(const Tensor& a, const std::vector<i64>& indices) {
    check(a.rank() >= 1, "gather_rows: rank 0");
    const i64 rows = a.dim(0);
    const i64 row_sz = a.numel() / rows;
    Shape out_shape = a.shape();
    out_shape[0] = static_cast<i64>(indices.size());
    auto out = detail::alloc(out_shape);
    for (std::size_t rI = 0; rI < indices.size(); ++rI) {
        const i64 src = indices[rI];
        check(src >= 0 && src < rows, "gather_rows: index out of range");
        std::copy(a.data().data() + src * row_sz, a.data().data() + (src + 1) * row_sz,
                  out->data.data() + static_cast<i64>(rI) * row_sz);
    }
    if (grad_mode() && a.requires_grad()) {
        out->requires_grad = true;
        out->parents = {a.impl()};
        auto ai = a.impl();
        TensorImpl* oi = out.get();
        auto idx = std::make_shared<std::vector<i64>>(indices);
        out->backward_fn = [ai, oi, idx, row_sz]() {
            ai->ensure_grad();
            for (std::size_t rI = 0; rI < idx->size(); ++rI) {
                const double* srcp = oi->grad.data() + static_cast<i64>(rI) * row_sz;
                double* dstp = ai->grad.data() + (*idx)[rI] * row_sz;
                for (i64 i = 0; i < row_sz; ++i) dstp[i] += srcp[i];
            }
        };
    }
    return Tensor(out);
}

inline Tensor gather_last(const Tensor& a, const std::vector<i64>& indices) {
    const int r = a.rank();
    const i64 last = a.dim(r - 1);
    const i64 outer = a.numel() / last;
    Shape out_shape = a.shape();
    out_shape[static_cast<std::size_t>(r - 1)] = static_cast<i64>(indices.size());
    auto out = detail::alloc(out_shape);
    const i64 olast = static_cast<i64>(indices.size());
    for (i64 o = 0; o < outer; ++o)
        for (i64 j = 0; j < olast; ++j) {
            const i64 src = indices[static_cast<std::size_t>(j)];
            check(src >= 0 && src < last, "gather_last: index out of range");
            out->data[static_cast<std::size_t>(o * olast + j)] = a.data()[static_cast<std::size_t>(o * last + src)];
        }
    if (grad_mode() && a.requires_grad()) {
        out->requires_grad = true;
        out->parents = {a.impl()};
        auto ai = a.impl();
        TensorImpl* oi = out.get();
        auto idx = std::make_shared<std::vector<i64>>(indices);
        out->backward_fn = [ai, oi, idx, outer, last, olast]() {
            ai->ensure_grad();
            for (i64 o = 0; o < outer; ++o)
                for (i64 j = 0; j < olast; ++j)
                    ai->grad[static_cast<std::size_t>(o * last + (*idx)[static_cast<std::size_t>(j)])] +=
                        oi->grad[static_cast<std::size_t>(o * olast + j)];
        };
    }
    return Tensor(out);
}

inline Tensor tile_leading(const Tensor& a, i64 n) {
    Shape out_shape;
    out_shape.push_back(n);
    for (i64 d : a.shape()) out_shape.push_back(d);
    auto out = detail::alloc(out_shape);
    const i64 sz = a.numel();
    for (i64 i = 0; i < n; ++i)
        std::copy(a.data().begin(), a.data().end(), out->data.begin() + i * sz);
    if (grad_mode() && a.requires_grad()) {
        out->requires_grad = true;
        out->parents = {a.impl()};
        auto ai = a.impl();
        TensorImpl* oi = out.get();
        out->backward_fn = [ai, oi, n, sz]() {
            ai->ensure_grad();
            for (i64 i = 0; i < n; ++i) {
                const double* srcp = oi->grad.data() + i * sz;
                for (i64 j = 0; j < sz; ++j) ai->grad[static_cast<std::size_t>(j)] += srcp[j];
            }
        };
    }
    return Tensor(out);
}

// ---- reductions and axis ops ----

inline Tensor sum_axis(const Tensor& a, int axis) {
    const auto v = detail::axis_view(a.shape(), axis);
    auto out = detail::alloc(detail::drop_axis(a.shape(), axis));
    for (i64 o = 0; o < v.outer; ++o)
        for (i64 i = 0; i < v.inner; ++i) {
            double s = 0.0;
            for (i64 k = 0; k < v.len; ++k) s += a.data()[static_cast<std::size_t>((o * v.len + k) * v.inner + i)];
            out->data[static_cast<std::size_t>(o * v.inner + i)] = s;
        }
    if (grad_mode() && a.requires_grad()) {
        out->requires_grad = true;
        out->parents = {a.impl()};
        auto ai = a.impl();
        TensorImpl* oi = out.get();
        out->backward_fn = [ai, oi, v]() {
            ai->ensure_grad();
            for (i64 o = 0; o < v.outer; ++o)
                for (i64 i = 0; i < v.inner; ++i) {
                    const double u = oi->grad[static_cast<std::size_t>(o * v.inner + i)];
                    for (i64 k = 0; k < v.len; ++k)
                        ai->grad[static_cast<std::size_t>((o * v.len + k) * v.inner + i)] += u;
                }
        };
    }
    return Tensor(out);
}

inline Tensor mean_axis(const Tensor& a, int axis) {
    const i64 len = detail::axis_view(a.shape(), axis).len;
    return scale(sum_axis(a, axis), 1.0 / static_cast<double>(len));
}

inline Tensor sum_all(const Tensor& a) {
    auto out = detail::alloc({1});
    double s = 0.0;
    for (double x : a.data()) s += x;
    out->data[0] = s;
    if (grad_mode() && a.requires_grad()) {
        out->requires_grad = true;
        out->parents = {a.impl()};
        auto ai = a.impl();
        TensorImpl* oi = out.get();
        out->backward_fn = [ai, oi]() {
            ai->ensure_grad();
            const double u = oi->grad[0];
            for (auto& g : ai->grad) g += u;
        };
    }
    return Tensor(out);
}

inline Tensor mean_all(const Tensor& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

inline Tensor softmax(const Tensor& a, int axis) {
    const auto v = detail::axis_view(a.shape(), axis);
    auto out = detail::alloc(a.shape());
    for (i64 o = 0; o < v.outer; ++o)
        for (i64 i = 0; i < v.inner; ++i) {
            double mx = -1e300;
            for (i64 k = 0; k < v.len; ++k)
                mx = std::max(mx, a.data()[static_cast<std::size_t>((o * v.len + k) * v.inner + i)]);
            double den = 0.0;
            for (i64 k = 0; k < v.len; ++k) {
                const double e = std::exp(a.data()[static_cast<std::size_t>((o * v.len + k) * v.inner + i)] - mx);
                out->data[static_cast<std::size_t>((o * v.len + k) * v.inner + i)] = e;
                den += e;
            }
            for (i64 k = 0; k < v.len; ++k)
                out->data[static_cast<std::size_t>((o * v.len + k) * v.inner + i)] /= den;
        }
    if (grad_mode() && a.requires_grad()) {
        out->requires_grad = true;
        out->parents = {a.impl()};
        auto ai = a.impl();
        TensorImpl* oi = out.get();
        out->backward_fn = [ai, oi, v]() {
            ai->ensure_grad();
            for (i64 o = 0; o < v.outer; ++o)
                for (i64 i = 0; i < v.inner; ++i) {
                    double dot = 0.0;
                    for (i64 k = 0; k < v.len; ++k) {
                        const std::size_t ix = static_cast<std::size_t>((o * v.len + k) * v.inner + i);
                        dot += oi->grad[ix] * oi->data[ix];
                    }
                    for (i64 k = 0; k < v.len; ++k) {
                        const std::size_t ix = static_cast<std::size_t>((o * v.len + k) * v.inner + i);
                        ai->grad[ix] += oi->data[ix] * (oi->grad[ix] - dot);
                    }
                }
        };
    }
    return Tensor(out);
}

inline Tensor log_sum_exp(const Tensor& a, int axis) {
    const auto v = detail::axis_view(a.shape(), axis);
    auto out = detail::alloc(detail::drop_axis(a.shape(), axis));
    for (i64 o = 0; o < v.outer; ++o)
        for (i64 i = 0; i < v.inner; ++i) {
            double mx = -1e300;
            for (i64 k = 0; k < v.len; ++k)
                mx = std::max(mx, a.data()[static_cast<std::size_t>((o * v.len + k) * v.inner + i)]);
            double s = 0.0;
            for (i64 k = 0; k < v.len; ++k)
                s += std::exp(a.data()[static_cast<std::size_t>((o * v.len + k) * v.inner + i)] - mx);
            out->data[static_cast<std::size_t>(o * v.inner + i)] = mx + std::log(s);
        }
    if (grad_mode() && a.requires_grad()) {
        out->requires_grad = true;
        out->parents = {a.impl()};
        auto ai = a.impl();
        TensorImpl* oi = out.get();
        out->backward_fn = [ai, oi, v]() {
            ai->ensure_grad();
            for (i64 o = 0; o < v.outer; ++o)
                for (i64 i = 0; i < v.inner; ++i) {
                    const double lse = oi->data[static_cast<std::size_t>(o * v.inner + i)];
                    const double u = oi->grad[static_cast<std::size_t>(o * v.inner + i)];
                    for (i64 k = 0; k < v.len; ++k) {
                        const std::size_t ix = static_cast<std::size_t>((o * v.len + k) * v.inner + i);
                        ai->grad[ix] += u * std::exp(ai->data[ix] - lse);
                    }
                }
        };
    }
    return Tensor(out);
}

inline Tensor layer_norm(const Tensor& a, int axis, double eps) {
    const auto v = detail::axis_view(a.shape(), axis);
    auto out = detail::alloc(a.shape());
    auto invstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(v.outer * v.inner));
    for (i64 o = 0; o < v.outer; ++o)
        for (i64 i = 0; i < v.inner; ++i) {
            double mu = 0.0;
            for (i64 k = 0; k < v.len; ++k) mu += a.data()[static_cast<std::size_t>((o * v.len + k) * v.inner + i)];
            mu /= static_cast<double>(v.len);
            double var = 0.0;
            for (i64 k = 0; k < v.len; ++k) {
                const double d = a.data()[static_cast<std::size_t>((o * v.len + k) * v.inner + i)] - mu;
                var += d * d;
            }
            var /= static_cast<double>(v.len);
            const double is = 1.0 / std::sqrt(var + eps);
            (*invstd)[static_cast<std::size_t>(o * v.inner + i)] = is;
            for (i64 k = 0; k < v.len; ++k) {
                const std::size_t ix = static_cast<std::size_t>((o * v.len + k) * v.inner + i);
                out->data[ix] = (a.data()[ix] - mu) * is;
            }
        }
    if (grad_mode() && a.requires_grad()) {
        out->requires_grad = true;
        out->parents = {a.impl()};
        auto ai = a.impl();
        TensorImpl* oi = out.get();
        out->backward_fn = [ai, oi, v, invstd]() {
            ai->ensure_grad();
            for (i64 o = 0; o < v.outer; ++o)
                for (i64 i = 0; i < v.inner; ++i) {
                    const double is = (*invstd)[static_cast<std::size_t>(o * v.inner + i)];
                    double mu_u = 0.0, mu_uy = 0.0;
                    for (i64 k = 0; k < v.len; ++k) {
                        const std::size_t ix = static_cast<std::size_t>((o * v.len + k) * v.inner + i);
                        mu_u += oi->grad[ix];
                        mu_uy += oi->grad[ix] * oi->data[ix];
                    }
                    mu_u /= static_cast<double>(v.len);
                    mu_uy /= static_cast<double>(v.len);
                    for (i64 k = 0; k < v.len; ++k) {
                        const std::size_t ix = static_cast<std::size_t>((o * v.len + k) * v.inner + i);
                        ai->grad[ix] += is * (oi->grad[ix] - mu_u - oi->data[ix] * mu_uy);
                    }
                }
        };
    }
    return Tensor(out);
}

inline Tensor l2_normalize(const Tensor& a, int axis, double eps = 1e-12) {
    const auto v = detail::axis_view(a.shape(), axis);
    auto out = detail::alloc(a.shape());
    auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(v.outer * v.inner));
    for (i64 o = 0; o < v.outer; ++o)
        for (i64 i = 0; i < v.inner; ++i) {
            double s = 0.0;
            for (i64 k = 0; k < v.len; ++k) {
                const double x = a.data()[static_cast<std::size_t>((o * v.len + k) * v.inner + i)];
                s += x * x;
            }
            const double nrm = std::sqrt(s);
            (*norms)[static_cast<std::size_t>(o * v.inner + i)] = nrm;
            const double den = std::max(nrm, eps);
            for (i64 k = 0; k < v.len; ++k) {
                const std::size_t ix = static_cast<std::size_t>((o * v.len + k) * v.inner + i);
                out->data[ix] = a.data()[ix] / den;
            }
        }
    if (grad_mode() && a.requires_grad()) {
        out->requires_grad = true;
        out->parents = {a.impl()};
        auto ai = a.impl();
        TensorImpl* oi = out.get();
        out->backward_fn = [ai, oi, v, norms, eps]() {
            ai->ensure_grad();
            for (i64 o = 0; o < v.outer; ++o)
                for (i64 i = 0; i < v.inner; ++i) {
                    const double nrm = (*norms)[static_cast<std::size_t>(o * v.inner + i)];
                    const double den = std::max(nrm, eps);
                    if (nrm > eps) {
                        double dot = 0.0;
                        for (i64 k = 0; k < v.len; ++k) {
                            const std::size_t ix = static_cast<std::size_t>((o * v.len + k) * v.inner + i);
                            dot += oi->grad[ix] * oi->data[ix];
                        }
                        for (i64 k = 0; k < v.len; ++k) {
                            const std::size_t ix = static_cast<std::size_t>((o * v.len + k) * v.inner + i);
                            ai->grad[ix] += (oi->grad[ix] - oi->data[ix] * dot) / den;
                        }
                    } else {
                        for (i64 k = 0; k < v.len; ++k) {
                            const std::size_t ix = static_cast<std::size_t>((o * v.len + k) * v.inner + i);
                            ai->grad[ix] += oi->grad[ix] / den;
                        }
                    }
                }
        };
    }
    return Tensor(out);
}

// ---- matmul ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const int ra = a.rank(), rb = b.rank();
    check((ra == 2 && rb == 2) || (ra == 3 && rb == 2) || (ra == 3 && rb == 3),
          "matmul: unsupported ranks " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const i64 k = a.dim(-1);
    check(k == b.dim(rb == 2 ? 0 : 1), "matmul: inner dims differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    if (ra == 3 && rb == 3)
        check(a.dim(0) == b.dim(0), "matmul: batch dims differ");
    const i64 m = a.dim(ra - 2);
    const i64 n = b.dim(-1);
    const i64 batch = (ra == 3) ? a.dim(0) : 1;

    Shape out_shape = (ra == 3) ? Shape{batch, m, n} : Shape{m, n};
    auto out = detail::alloc(out_shape);
    for (i64 bI = 0; bI < batch; ++bI) {
        const double* A = a.data().data() + (ra == 3 ? bI * m * k : 0);
        const double* B = b.data().data() + (rb == 3 ? bI * k * n : 0);
        detail::mm_nn(A, B, out->data.data() + bI * m * n, m, k, n, false);
    }
    if (grad_mode() && (a.requires_grad() || b.requires_grad())) {
        out->requires_grad = true;
        out->parents = {a.impl(), b.impl()};
        auto ai = a.impl();
        auto bi = b.impl();
        TensorImpl* oi = out.get();
        out->backward_fn = [ai, bi, oi, m, k, n, batch, ra, rb]() {
            if (ai->requires_grad) ai->ensure_grad();
            if (bi->requires_grad) bi->ensure_grad();
            for (i64 bI = 0; bI < batch; ++bI) {
                const double* dC = oi->grad.data() + bI * m * n;
                const double* A = ai->data.data() + (ra == 3 ? bI * m * k : 0);
                const double* B = bi->data.data() + (rb == 3 ? bI * k * n : 0);
                if (ai->requires_grad)
                    detail::mm_nt(dC, B, ai->grad.data() + (ra == 3 ? bI * m * k : 0), m, k, n, true);
                if (bi->requires_grad)
                    detail::mm_tn(A, dC, bi->grad.data() + (rb == 3 ? bI * k * n : 0), m, k, n, true);
            }
        };
    }
    return Tensor(out);
}

inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor()) {
    Tensor y;
    if (x.rank() == 2 || x.rank() == 3) {
        y = matmul(x, w);
    } else {
        check(false, "linear: rank must be 2 or 3");
    }
    if (bias.defined()) y = add(y, bias);
    return y;
}

// ---- conv1d ----

inline Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, i64 stride, i64 padding) {
    check(x.rank() == 3 && w.rank() == 3, "conv1d: expects [B,Cin,L] and [Cout,Cin,K]");
    const i64 B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
    const i64 Cout = w.dim(0), K = w.dim(2);
    check(w.dim(1) == Cin, "conv1d: channel mismatch");
    check(stride >= 1 && padding >= 0, "conv1d: bad stride/padding");
    const i64 Lo = (L + 2 * padding - K) / stride + 1;
    check(L + 2 * padding >= K && Lo >= 1, "conv1d: output would be empty");
    if (bias.defined()) check(bias.rank() == 1 && bias.dim(0) == Cout, "conv1d: bias shape");

    auto out = detail::alloc({B, Cout, Lo});
    const double* X = x.data().data();
    const double* W = w.data().data();
    for (i64 b = 0; b < B; ++b)
        for (i64 co = 0; co < Cout; ++co) {
            double* op = out->data.data() + (b * Cout + co) * Lo;
            if (bias.defined()) {
                const double bv = bias.data()[static_cast<std::size_t>(co)];
                for (i64 t = 0; t < Lo; ++t) op[t] = bv;
            }
            for (i64 ci = 0; ci < Cin; ++ci) {
                const double* xp = X + (b * Cin + ci) * L;
                const double* wp = W + (co * Cin + ci) * K;
                for (i64 kk = 0; kk < K; ++kk) {
                    const double wv = wp[kk];
                    const i64 t0 = std::max<i64>(0, (padding - kk + stride - 1) / stride);
                    const i64 t1 = std::min<i64>(Lo, (L - 1 + padding - kk) / stride + 1);
                    for (i64 t = t0; t < t1; ++t) op[t] += wv * xp[t * stride + kk - padding];
                }
            }
        }
    const bool rg = grad_mode() && (x.requires_grad() || w.requires_grad() || (bias.defined() && bias.requires_grad()));
    if (rg) {
        out->requires_grad = true;
        out->parents = {x.impl(), w.impl()};
        if (bias.defined()) out->parents.push_back(bias.impl());
        auto xi = x.impl();
        auto wi = w.impl();
        auto bi2 = bias.defined() ? bias.impl() : nullptr;
        TensorImpl* oi = out.get();
        out->backward_fn = [xi, wi, bi2, oi, B, Cin, Cout, L, K, Lo, stride, padding]() {
            if (xi->requires_grad) xi->ensure_grad();
            if (wi->requires_grad) wi->ensure_grad();
            if (bi2 && bi2->requires_grad) bi2->ensure_grad();
            const double* U = oi->grad.data();
            for (i64 b = 0; b < B; ++b)
                for (i64 co = 0; co < Cout; ++co) {
                    const double* up = U + (b * Cout + co) * Lo;
                    if (bi2 && bi2->requires_grad) {
                        double s = 0.0;
                        for (i64 t = 0; t < Lo; ++t) s += up[t];
                        bi2->grad[static_cast<std::size_t>(co)] += s;
                    }
                    for (i64 ci = 0; ci < Cin; ++ci) {
                        const double* xp = xi->data.data() + (b * Cin + ci) * L;
                        const double* wp = wi->data.data() + (co * Cin + ci) * K;
                        double* gx = xi->requires_grad ? xi->grad.data() + (b * Cin + ci) * L : nullptr;
                        double* gw = wi->requires_grad ? wi->grad.data() + (co * Cin + ci) * K : nullptr;
                        for (i64 kk = 0; kk < K; ++kk) {
                            const i64 t0 = std::max<i64>(0, (padding - kk + stride - 1) / stride);
                            const i64 t1 = std::min<i64>(Lo, (L - 1 + padding - kk) / stride + 1);
                            if (gw) {
                                double s = 0.0;
                                for (i64 t = t0; t < t1; ++t) s += up[t] * xp[t * stride + kk - padding];
                                gw[kk] += s;
                            }
                            if (gx) {
                                const double wv = wp[kk];
                                for (i64 t = t0; t < t1; ++t) gx[t * stride + kk - padding] += wv * up[t];
                            }
                        }
                    }
                }
        };
    }
    return Tensor(out);
}

// ---- fused losses ----

inline Tensor bce_with_logits_weighted_mean(const Tensor& logits, const Tensor& targets,
                                            const Tensor& class_weights) {
    check(logits.rank() == 2 && targets.rank() == 2, "bce: expects [B,C] logits and targets");
    check(logits.shape() == targets.shape(), "bce: logits/targets shape mismatch");
    const i64 B = logits.dim(0), C = logits.dim(1);
    check(class_weights.rank() == 1 && class_weights.dim(0) == C, "bce: class weight shape");
    auto out = detail::alloc({1});
    const double* L = logits.data().data();
    const double* Y = targets.data().data();
    const double* Wc = class_weights.data().data();
    double s = 0.0;
    for (i64 b = 0; b < B; ++b)
        for (i64 c = 0; c < C; ++c) {
            const double l = L[b * C + c], y = Y[b * C + c];
            s += Wc[c] * (std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::abs(l))));
        }
    const double inv = 1.0 / static_cast<double>(B * C);
    out->data[0] = s * inv;
    if (grad_mode() && logits.requires_grad()) {
        out->requires_grad = true;
        out->parents = {logits.impl()};
        auto li = logits.impl();
        auto yi = targets.impl();
        auto wi = class_weights.impl();
        TensorImpl* oi = out.get();
        out->backward_fn = [li, yi, wi, oi, B, C, inv]() {
            li->ensure_grad();
            const double u = oi->grad[0];
            for (i64 b = 0; b < B; ++b)
                for (i64 c = 0; c < C; ++c) {
                    const double l = li->data[static_cast<std::size_t>(b * C + c)];
                    const double sg = l >= 0.0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l));
                    li->grad[static_cast<std::size_t>(b * C + c)] +=
                        u * inv * wi->data[static_cast<std::size_t>(c)] *
                        (sg - yi->data[static_cast<std::size_t>(b * C + c)]);
                }
        };
    }
    return Tensor(out);
}

}  // namespace peace
