#include "pat/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "pat/errors.hpp"

namespace pat {
inline namespace PAT_ABI {

namespace {

thread_local bool g_grad_enabled = true;

void gemm(bool ta, bool tb, int m, int n, int k, Scalar alpha, const Scalar* a, int lda, const Scalar* b, int ldb,
          Scalar beta, Scalar* c, int ldc) {
    const auto opa = ta ? CblasTrans : CblasNoTrans;
    const auto opb = tb ? CblasTrans : CblasNoTrans;
#if defined(PAT_SCALAR_F64)
    cblas_dgemm(CblasRowMajor, opa, opb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
#else
    cblas_sgemm(CblasRowMajor, opa, opb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
#endif
}

void require_2d(const Tensor& t, const char* op) {
    if (!t.defined() || t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a 2-D tensor, got " +
                             (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
    }
}

// b broadcasts over a when shapes match, b is a trailing suffix of a, or b has one element.
void require_broadcastable(const Tensor& a, const Tensor& b, const char* op) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (b.numel() == 1) return;
    if (sb.size() <= sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) return;
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(sb) + " onto " + shape_str(sa));
}

bool wants_grad(const TensorImpl* t) { return t != nullptr && t->requires_grad; }

template <typename F>
Tensor unary(const char* op, const Tensor& a, F&& value, std::function<Scalar(Scalar x, Scalar y)> deriv) {
    std::vector<Scalar> out(a.numel());
    auto in = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = value(in[i]);
    TensorImpl* pa = a.impl();
    return make_op_result(op, a.shape(), std::move(out), {a}, [pa, deriv](TensorImpl& o) {
        if (!wants_grad(pa)) return;
        auto g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * deriv(pa->data[i], o.data[i]);
    });
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

std::span<Scalar> TensorImpl::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), Scalar(0));
    return grad;
}

Tensor::Tensor(Shape shape, Scalar fill, bool requires_grad) : impl_(std::make_shared<TensorImpl>()) {
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    impl_->data.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
    impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<Scalar> data, bool requires_grad) : impl_(std::make_shared<TensorImpl>()) {
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    if (data.size() != shape_numel(shape)) {
        throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                             shape_str(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(Scalar v, bool requires_grad) { return Tensor(Shape{1}, std::vector<Scalar>{v}, requires_grad); }

Tensor Tensor::parameter(Shape shape, std::vector<Scalar> data) { return Tensor(std::move(shape), std::move(data), true); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= impl_->shape.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(impl_->shape));
    }
    return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }
std::span<Scalar> Tensor::data() { return impl_->data; }
std::span<const Scalar> Tensor::data() const { return impl_->data; }

Scalar Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }
std::span<const Scalar> Tensor::grad() const { return impl_->grad; }
std::span<Scalar> Tensor::mutable_grad() { return impl_->grad_buffer(); }
void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->data, false); }

Tensor Tensor::clone() const {
    Tensor t(impl_->shape, impl_->data, impl_->requires_grad);
    return t;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace {
thread_local DetachedTape* g_tape = nullptr;
}

Tensor DetachedTape::take(const std::function<Tensor()>& compute) {
    if (mode_ == Mode::Record) {
        values_.push_back(compute());
        return values_.back();
    }
    if (cursor_ >= values_.size()) throw ContractError("detached tape: replay ran past the recorded values");
    return values_[cursor_++];
}

DetachedTapeScope::DetachedTapeScope(DetachedTape* tape) : previous_(g_tape) { g_tape = tape; }
DetachedTapeScope::~DetachedTapeScope() { g_tape = previous_; }

Tensor detached(const std::function<Tensor()>& compute) {
    auto run = [&compute] {
        NoGradGuard guard;
        return compute().detach();
    };
    return g_tape ? g_tape->take(run) : run();
}

Tensor make_op_result(const char* op, Shape shape, std::vector<Scalar> data, const std::vector<Tensor>& inputs,
                      BackwardFn backward) {
    for (Scalar v : data) {
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& t : inputs) any = any || t.requires_grad();
        if (any) {
            impl->requires_grad = true;
            for (const auto& t : inputs) {
                if (t.defined()) impl->parents.push_back(t.impl_ptr());
            }
            impl->backward = std::move(backward);
        }
    }
    return Tensor(std::move(impl));
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward: loss must be a scalar tensor, got " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    }
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack{{loss.impl(), 0}};
    visited.insert(loss.impl());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorImpl* p = node->parents[next++].get();
            if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (TensorImpl* n : order) {
        if (!n->is_leaf()) n->grad.assign(n->data.size(), Scalar(0));
    }
    loss.impl()->grad_buffer()[0] += Scalar(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward) (*it)->backward(**it);
    }
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    }
    std::vector<Scalar> out(m * n);
    gemm(false, false, int(m), int(n), int(k), 1, a.data().data(), int(k), b.data().data(), int(n), 0, out.data(),
         int(n));
    TensorImpl* pa = a.impl();
    TensorImpl* pb = b.impl();
    return make_op_result("matmul", {m, n}, std::move(out), {a, b}, [pa, pb, m, n, k](TensorImpl& o) {
        if (wants_grad(pa)) {
            gemm(false, true, int(m), int(k), int(n), 1, o.grad.data(), int(n), pb->data.data(), int(n), 1,
                 pa->grad_buffer().data(), int(k));
        }
        if (wants_grad(pb)) {
            gemm(true, false, int(k), int(n), int(m), 1, pa->data.data(), int(k), o.grad.data(), int(n), 1,
                 pb->grad_buffer().data(), int(n));
        }
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_nt");
    require_2d(b, "matmul_nt");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k) {
        throw DimensionError("matmul_nt: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()) + "^T");
    }
    std::vector<Scalar> out(m * n);
    gemm(false, true, int(m), int(n), int(k), 1, a.data().data(), int(k), b.data().data(), int(k), 0, out.data(),
         int(n));
    TensorImpl* pa = a.impl();
    TensorImpl* pb = b.impl();
    return make_op_result("matmul_nt", {m, n}, std::move(out), {a, b}, [pa, pb, m, n, k](TensorImpl& o) {
        // C = A Bᵀ: dA = dC B, dB = dCᵀ A
        if (wants_grad(pa)) {
            gemm(false, false, int(m), int(k), int(n), 1, o.grad.data(), int(n), pb->data.data(), int(k), 1,
                 pa->grad_buffer().data(), int(k));
        }
        if (wants_grad(pb)) {
            gemm(true, false, int(n), int(k), int(m), 1, o.grad.data(), int(n), pa->data.data(), int(k), 1,
                 pb->grad_buffer().data(), int(k));
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const std::size_t r = a.dim(0), c = a.dim(1);
    std::vector<Scalar> out(r * c);
    auto in = a.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
    TensorImpl* pa = a.impl();
    return make_op_result("transpose", {c, r}, std::move(out), {a}, [pa, r, c](TensorImpl& o) {
        if (!wants_grad(pa)) return;
        auto g = pa->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) + " changes size");
    }
    std::vector<Scalar> out(a.data().begin(), a.data().end());
    TensorImpl* pa = a.impl();
    return make_op_result("reshape", std::move(shape), std::move(out), {a}, [pa](TensorImpl& o) {
        if (!wants_grad(pa)) return;
        auto g = pa->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
}

namespace {

struct AxisSplit {
    std::size_t outer, extent, inner;
};

AxisSplit axis_split(const Shape& s, std::size_t axis) {
    AxisSplit r{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ContractError("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    if (axis >= s0.size()) throw DimensionError("concat: axis out of range for " + shape_str(s0));
    Shape out_shape = s0;
    out_shape[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == s0.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == s0[i];
        if (!ok) throw DimensionError("concat: incompatible shapes " + shape_str(s0) + " and " + shape_str(s));
        out_shape[axis] += s[axis];
    }
    const AxisSplit os = axis_split(out_shape, axis);
    std::vector<Scalar> out(shape_numel(out_shape));
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::size_t ext = p.dim(axis);
        auto in = p.data();
        for (std::size_t o = 0; o < os.outer; ++o) {
            std::copy_n(in.begin() + o * ext * os.inner, ext * os.inner,
                        out.begin() + (o * os.extent + off) * os.inner);
        }
        off += ext;
    }
    std::vector<TensorImpl*> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    return make_op_result("concat", out_shape, std::move(out), parts, [impls, offsets, axis, os](TensorImpl& o) {
        for (std::size_t pi = 0; pi < impls.size(); ++pi) {
            TensorImpl* p = impls[pi];
            if (!wants_grad(p)) continue;
            const std::size_t ext = p->shape[axis];
            auto g = p->grad_buffer();
            for (std::size_t ou = 0; ou < os.outer; ++ou) {
                const Scalar* src = o.grad.data() + (ou * os.extent + offsets[pi]) * os.inner;
                Scalar* dst = g.data() + ou * ext * os.inner;
                for (std::size_t i = 0; i < ext * os.inner; ++i) dst[i] += src[i];
            }
        }
    });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
    if (axis >= a.rank()) throw DimensionError("slice: axis out of range for " + shape_str(a.shape()));
    if (begin >= end || end > a.dim(axis)) {
        throw DimensionError("slice: bad range [" + std::to_string(begin) + "," + std::to_string(end) + ") for " +
                             shape_str(a.shape()));
    }
    const AxisSplit as = axis_split(a.shape(), axis);
    Shape out_shape = a.shape();
    out_shape[axis] = end - begin;
    const std::size_t ext = end - begin;
    std::vector<Scalar> out(as.outer * ext * as.inner);
    auto in = a.data();
    for (std::size_t o = 0; o < as.outer; ++o) {
        std::copy_n(in.begin() + (o * as.extent + begin) * as.inner, ext * as.inner, out.begin() + o * ext * as.inner);
    }
    TensorImpl* pa = a.impl();
    return make_op_result("slice", out_shape, std::move(out), {a}, [pa, as, begin, ext](TensorImpl& o) {
        if (!wants_grad(pa)) return;
        auto g = pa->grad_buffer();
        for (std::size_t ou = 0; ou < as.outer; ++ou) {
            const Scalar* src = o.grad.data() + ou * ext * as.inner;
            Scalar* dst = g.data() + (ou * as.extent + begin) * as.inner;
            for (std::size_t i = 0; i < ext * as.inner; ++i) dst[i] += src[i];
        }
    });
}

std::vector<Tensor> split(const Tensor& a, std::size_t axis, const std::vector<std::size_t>& sizes) {
    std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    if (axis >= a.rank() || total != a.dim(axis)) {
        throw DimensionError("split: sizes do not cover axis of " + shape_str(a.shape()));
    }
    std::vector<Tensor> parts;
    std::size_t begin = 0;
    for (auto s : sizes) {
        parts.push_back(slice(a, axis, begin, begin + s));
        begin += s;
    }
    return parts;
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_broadcastable(a, b, "add");
    const std::size_t nb = b.numel();
    std::vector<Scalar> out(a.numel());
    auto da = a.data();
    auto db = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i % nb];
    TensorImpl* pa = a.impl();
    TensorImpl* pb = b.impl();
    return make_op_result("add", a.shape(), std::move(out), {a, b}, [pa, pb, nb](TensorImpl& o) {
        if (wants_grad(pa)) {
            auto g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
        if (wants_grad(pb)) {
            auto g = pb->grad_buffer();
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % nb] += o.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_broadcastable(a, b, "sub");
    const std::size_t nb = b.numel();
    std::vector<Scalar> out(a.numel());
    auto da = a.data();
    auto db = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i % nb];
    TensorImpl* pa = a.impl();
    TensorImpl* pb = b.impl();
    return make_op_result("sub", a.shape(), std::move(out), {a, b}, [pa, pb, nb](TensorImpl& o) {
        if (wants_grad(pa)) {
            auto g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
        }
        if (wants_grad(pb)) {
            auto g = pb->grad_buffer();
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % nb] -= o.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_broadcastable(a, b, "mul");
    const std::size_t nb = b.numel();
    std::vector<Scalar> out(a.numel());
    auto da = a.data();
    auto db = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i % nb];
    TensorImpl* pa = a.impl();
    TensorImpl* pb = b.impl();
    return make_op_result("mul", a.shape(), std::move(out), {a, b}, [pa, pb, nb](TensorImpl& o) {
        if (wants_grad(pa)) {
            auto g = pa->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * pb->data[i % nb];
        }
        if (wants_grad(pb)) {
            auto g = pb->grad_buffer();
            for (std::size_t i = 0; i < o.grad.size(); ++i) g[i % nb] += o.grad[i] * pa->data[i];
        }
    });
}

Tensor scale(const Tensor& a, Scalar s) {
    return unary("scale", a, [s](Scalar x) { return x * s; }, [s](Scalar, Scalar) { return s; });
}

Tensor add_scalar(const Tensor& a, Scalar s) {
    return unary("add_scalar", a, [s](Scalar x) { return x + s; }, [](Scalar, Scalar) { return Scalar(1); });
}

Tensor exp(const Tensor& a) {
    return unary("exp", a, [](Scalar x) { return std::exp(x); }, [](Scalar, Scalar y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary("log", a, [](Scalar x) { return std::log(x); }, [](Scalar x, Scalar) { return Scalar(1) / x; });
}

Tensor log10(const Tensor& a) {
    const Scalar inv_ln10 = Scalar(1.0 / std::log(10.0));
    return unary(
        "log10", a, [](Scalar x) { return std::log10(x); }, [inv_ln10](Scalar x, Scalar) { return inv_ln10 / x; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        "sigmoid", a,
        [](Scalar x) {
            // split by sign so exp never overflows
            if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
            const Scalar e = std::exp(x);
            return e / (Scalar(1) + e);
        },
        [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

Tensor gelu(const Tensor& a) {
    const Scalar inv_sqrt2 = Scalar(1.0 / std::sqrt(2.0));
    const Scalar inv_sqrt_2pi = Scalar(1.0 / std::sqrt(2.0 * M_PI));
    return unary(
        "gelu", a, [inv_sqrt2](Scalar x) { return Scalar(0.5) * x * (Scalar(1) + std::erf(x * inv_sqrt2)); },
        [inv_sqrt2, inv_sqrt_2pi](Scalar x, Scalar) {
            const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(x * inv_sqrt2));
            return cdf + x * inv_sqrt_2pi * std::exp(Scalar(-0.5) * x * x);
        });
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a) {
    Scalar s = 0;
    for (Scalar v : a.data()) s += v;
    TensorImpl* pa = a.impl();
    return make_op_result("sum", {1}, {s}, {a}, [pa](TensorImpl& o) {
        if (!wants_grad(pa)) return;
        for (auto& g : pa->grad_buffer()) g += o.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), Scalar(1) / Scalar(a.numel())); }

Tensor sum_axis(const Tensor& a, std::size_t axis) {
    if (axis >= a.rank()) throw DimensionError("sum_axis: axis out of range for " + shape_str(a.shape()));
    const AxisSplit as = axis_split(a.shape(), axis);
    Shape out_shape;
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != axis) out_shape.push_back(a.dim(i));
    if (out_shape.empty()) out_shape.push_back(1);
    std::vector<Scalar> out(as.outer * as.inner, Scalar(0));
    auto in = a.data();
    for (std::size_t o = 0; o < as.outer; ++o)
        for (std::size_t e = 0; e < as.extent; ++e)
            for (std::size_t i = 0; i < as.inner; ++i) out[o * as.inner + i] += in[(o * as.extent + e) * as.inner + i];
    TensorImpl* pa = a.impl();
    return make_op_result("sum_axis", out_shape, std::move(out), {a}, [pa, as](TensorImpl& o) {
        if (!wants_grad(pa)) return;
        auto g = pa->grad_buffer();
        for (std::size_t ou = 0; ou < as.outer; ++ou)
            for (std::size_t e = 0; e < as.extent; ++e)
                for (std::size_t i = 0; i < as.inner; ++i)
                    g[(ou * as.extent + e) * as.inner + i] += o.grad[ou * as.inner + i];
    });
}

Tensor mean_axis(const Tensor& a, std::size_t axis) {
    return scale(sum_axis(a, axis), Scalar(1) / Scalar(a.dim(axis)));
}

// ---- nn primitives --------------------------------------------------------

Tensor softmax_lastdim(const Tensor& x) {
    if (!x.defined() || x.rank() == 0) throw DimensionError("softmax_lastdim: empty tensor");
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    std::vector<Scalar> out(x.numel());
    auto in = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const Scalar* src = in.data() + r * n;
        Scalar* dst = out.data() + r * n;
        const Scalar mx = *std::max_element(src, src + n);
        Scalar z = 0;
        for (std::size_t j = 0; j < n; ++j) z += (dst[j] = std::exp(src[j] - mx));
        for (std::size_t j = 0; j < n; ++j) dst[j] /= z;
    }
    TensorImpl* px = x.impl();
    return make_op_result("softmax_lastdim", x.shape(), std::move(out), {x}, [px, n, rows](TensorImpl& o) {
        if (!wants_grad(px)) return;
        auto g = px->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r) {
            const Scalar* y = o.data.data() + r * n;
            const Scalar* dy = o.grad.data() + r * n;
            Scalar dot = 0;
            for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
            for (std::size_t j = 0; j < n; ++j) g[r * n + j] += y[j] * (dy[j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps) {
    const std::size_t n = x.shape().back();
    if (gamma.numel() != n || beta.numel() != n) {
        throw DimensionError("layer_norm: affine params must have " + std::to_string(n) + " elements");
    }
    const std::size_t rows = x.numel() / n;
    std::vector<Scalar> out(x.numel());
    std::vector<Scalar> xhat(x.numel());
    std::vector<Scalar> rstd(rows);
    auto in = x.data();
    auto g = gamma.data();
    auto b = beta.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const Scalar* src = in.data() + r * n;
        Scalar mu = 0;
        for (std::size_t j = 0; j < n; ++j) mu += src[j];
        mu /= Scalar(n);
        Scalar var = 0;
        for (std::size_t j = 0; j < n; ++j) var += (src[j] - mu) * (src[j] - mu);
        var /= Scalar(n);
        rstd[r] = Scalar(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[r * n + j] = (src[j] - mu) * rstd[r];
            out[r * n + j] = xhat[r * n + j] * g[j] + b[j];
        }
    }
    TensorImpl* px = x.impl();
    TensorImpl* pg = gamma.impl();
    TensorImpl* pb = beta.impl();
    return make_op_result(
        "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
        [px, pg, pb, n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](TensorImpl& o) {
            if (wants_grad(pg) || wants_grad(pb)) {
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < n; ++j) {
                        const Scalar dy = o.grad[r * n + j];
                        if (wants_grad(pg)) pg->grad_buffer()[j] += dy * xhat[r * n + j];
                        if (wants_grad(pb)) pb->grad_buffer()[j] += dy;
                    }
                }
            }
            if (!wants_grad(px)) return;
            auto gx = px->grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
                Scalar s1 = 0, s2 = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    const Scalar dxh = o.grad[r * n + j] * pg->data[j];
                    s1 += dxh;
                    s2 += dxh * xhat[r * n + j];
                }
                for (std::size_t j = 0; j < n; ++j) {
                    const Scalar dxh = o.grad[r * n + j] * pg->data[j];
                    gx[r * n + j] += rstd[r] / Scalar(n) * (Scalar(n) * dxh - s1 - xhat[r * n + j] * s2);
                }
            }
        });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    require_2d(a, "cosine_similarity");
    require_2d(b, "cosine_similarity");
    const std::size_t m = a.dim(0), d = a.dim(1), n = b.dim(0);
    if (b.dim(1) != d) {
        throw DimensionError("cosine_similarity: feature dims differ " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    constexpr Scalar kTiny = Scalar(1e-12);
    auto norms = [d](std::span<const Scalar> v, std::size_t rows) {
        std::vector<Scalar> r(rows);
        for (std::size_t i = 0; i < rows; ++i) {
            Scalar s = 0;
            for (std::size_t j = 0; j < d; ++j) s += v[i * d + j] * v[i * d + j];
            r[i] = std::sqrt(s);
        }
        return r;
    };
    std::vector<Scalar> na = norms(a.data(), m);
    std::vector<Scalar> nb = norms(b.data(), n);
    std::vector<Scalar> dots(m * n);
    gemm(false, true, int(m), int(n), int(d), 1, a.data().data(), int(d), b.data().data(), int(d), 0, dots.data(),
         int(n));
    std::vector<Scalar> out(m * n, Scalar(0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (na[i] > kTiny && nb[j] > kTiny) out[i * n + j] = dots[i * n + j] / (na[i] * nb[j]);
    TensorImpl* pa = a.impl();
    TensorImpl* pb = b.impl();
    return make_op_result(
        "cosine_similarity", {m, n}, std::move(out), {a, b},
        [pa, pb, m, n, d, na = std::move(na), nb = std::move(nb)](TensorImpl& o) {
            // d cos / d a_i = b_j/(|a_i||b_j|) - cos * a_i/|a_i|^2, symmetric for b_j
            std::vector<Scalar> w(m * n, Scalar(0));
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    if (na[i] > kTiny && nb[j] > kTiny) w[i * n + j] = o.grad[i * n + j] / (na[i] * nb[j]);
            if (wants_grad(pa)) {
                auto g = pa->grad_buffer();
                gemm(false, false, int(m), int(d), int(n), 1, w.data(), int(n), pb->data.data(), int(d), 1, g.data(),
                     int(d));
                for (std::size_t i = 0; i < m; ++i) {
                    if (na[i] <= kTiny) continue;
                    Scalar c = 0;
                    for (std::size_t j = 0; j < n; ++j) c += o.grad[i * n + j] * o.data[i * n + j];
                    const Scalar k = c / (na[i] * na[i]);
                    for (std::size_t t = 0; t < d; ++t) g[i * d + t] -= k * pa->data[i * d + t];
                }
            }
            if (wants_grad(pb)) {
                auto g = pb->grad_buffer();
                gemm(true, false, int(n), int(d), int(m), 1, w.data(), int(n), pa->data.data(), int(d), 1, g.data(),
                     int(d));
                for (std::size_t j = 0; j < n; ++j) {
                    if (nb[j] <= kTiny) continue;
                    Scalar c = 0;
                    for (std::size_t i = 0; i < m; ++i) c += o.grad[i * n + j] * o.data[i * n + j];
                    const Scalar k = c / (nb[j] * nb[j]);
                    for (std::size_t t = 0; t < d; ++t) g[j * d + t] -= k * pb->data[j * d + t];
                }
            }
        });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets) {
    require_2d(logits, "cross_entropy");
    const std::size_t rows = logits.dim(0), c = logits.dim(1);
    if (targets.size() != rows) {
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                             std::to_string(rows) + " rows");
    }
    std::vector<Scalar> prob(rows * c);
    auto in = logits.data();
    double total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (targets[r] < 0 || std::size_t(targets[r]) >= c) throw ContractError("cross_entropy: target out of range");
        const Scalar* z = in.data() + r * c;
        const Scalar mx = *std::max_element(z, z + c);
        Scalar s = 0;
        for (std::size_t j = 0; j < c; ++j) s += (prob[r * c + j] = std::exp(z[j] - mx));
        for (std::size_t j = 0; j < c; ++j) prob[r * c + j] /= s;
        total += double(std::log(s) + mx - z[targets[r]]);
    }
    TensorImpl* pl = logits.impl();
    std::vector<int> tgt(targets.begin(), targets.end());
    return make_op_result("cross_entropy", {1}, {Scalar(total / double(rows))}, {logits},
                          [pl, rows, c, prob = std::move(prob), tgt = std::move(tgt)](TensorImpl& o) {
                              if (!wants_grad(pl)) return;
                              auto g = pl->grad_buffer();
                              const Scalar k = o.grad[0] / Scalar(rows);
                              for (std::size_t r = 0; r < rows; ++r)
                                  for (std::size_t j = 0; j < c; ++j)
                                      g[r * c + j] += k * (prob[r * c + j] - (int(j) == tgt[r] ? Scalar(1) : Scalar(0)));
                          });
}

std::vector<std::size_t> argmax_lastdim(const Tensor& a) {
    require_2d(a, "argmax_lastdim");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<std::size_t> idx(m);
    auto in = a.data();
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < n; ++j)
            if (in[i * n + j] > in[i * n + best]) best = j;
        idx[i] = best;
    }
    return idx;
}

MaxResult max_lastdim(const Tensor& a) {
    auto idx = argmax_lastdim(a);
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<Scalar> out(m);
    for (std::size_t i = 0; i < m; ++i) out[i] = a.data()[i * n + idx[i]];
    TensorImpl* pa = a.impl();
    Tensor values = make_op_result("max_lastdim", {m}, std::move(out), {a}, [pa, idx, n](TensorImpl& o) {
        if (!wants_grad(pa)) return;
        auto g = pa->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i) g[i * n + idx[i]] += o.grad[i];
    });
    return {std::move(values), std::move(idx)};
}

std::vector<std::size_t> topk_indices(std::span<const Scalar> row, std::size_t k) {
    k = std::min(k, row.size());
    std::vector<std::size_t> idx(row.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + std::ptrdiff_t(k), idx.end(), [&](std::size_t x, std::size_t y) {
        return row[x] > row[y] || (row[x] == row[y] && x < y);
    });
    idx.resize(k);
    return idx;
}

Tensor gather_lastdim(const Tensor& a, const std::vector<std::vector<std::size_t>>& index) {
    require_2d(a, "gather_lastdim");
    const std::size_t m = a.dim(0), n = a.dim(1);
    if (index.size() != m) throw DimensionError("gather_lastdim: one index row per input row required");
    const std::size_t k = index.empty() ? 0 : index[0].size();
    std::vector<Scalar> out(m * k);
    for (std::size_t i = 0; i < m; ++i) {
        if (index[i].size() != k) throw DimensionError("gather_lastdim: ragged index");
        for (std::size_t j = 0; j < k; ++j) {
            if (index[i][j] >= n) throw DimensionError("gather_lastdim: index out of range");
            out[i * k + j] = a.data()[i * n + index[i][j]];
        }
    }
    TensorImpl* pa = a.impl();
    return make_op_result("gather_lastdim", {m, k}, std::move(out), {a}, [pa, index, n, k](TensorImpl& o) {
        if (!wants_grad(pa)) return;
        auto g = pa->grad_buffer();
        for (std::size_t i = 0; i < index.size(); ++i)
            for (std::size_t j = 0; j < k; ++j) g[i * n + index[i][j]] += o.grad[i * k + j];
    });
}

Tensor scatter_lastdim(const Tensor& base, const std::vector<std::vector<std::size_t>>& index, const Tensor& values) {
    require_2d(base, "scatter_lastdim");
    require_2d(values, "scatter_lastdim");
    const std::size_t m = base.dim(0), n = base.dim(1), k = values.dim(1);
    if (values.dim(0) != m || index.size() != m) throw DimensionError("scatter_lastdim: row count mismatch");
    std::vector<Scalar> out(base.data().begin(), base.data().end());
    std::vector<char> overwritten(m * n, 0);
    for (std::size_t i = 0; i < m; ++i) {
        if (index[i].size() != k) throw DimensionError("scatter_lastdim: ragged index");
        for (std::size_t j = 0; j < k; ++j) {
            if (index[i][j] >= n) throw DimensionError("scatter_lastdim: index out of range");
            out[i * n + index[i][j]] = values.data()[i * k + j];
            overwritten[i * n + index[i][j]] = 1;
        }
    }
    TensorImpl* pb = base.impl();
    TensorImpl* pv = values.impl();
    return make_op_result("scatter_lastdim", {m, n}, std::move(out), {base, values},
                          [pb, pv, index, n, k, overwritten = std::move(overwritten)](TensorImpl& o) {
                              if (wants_grad(pb)) {
                                  auto g = pb->grad_buffer();
                                  for (std::size_t i = 0; i < g.size(); ++i)
                                      if (!overwritten[i]) g[i] += o.grad[i];
                              }
                              if (wants_grad(pv)) {
                                  auto g = pv->grad_buffer();
                                  for (std::size_t i = 0; i < index.size(); ++i)
                                      for (std::size_t j = 0; j < k; ++j) g[i * k + j] += o.grad[i * n + index[i][j]];
                              }
                          });
}

// ---- init helpers ---------------------------------------------------------

std::vector<Scalar> xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::size_t count, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<Scalar> v(count);
    for (auto& x : v) x = Scalar(dist(rng));
    return v;
}

std::vector<Scalar> normal_init(std::size_t count, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<Scalar> v(count);
    for (auto& x : v) x = Scalar(dist(rng));
    return v;
}

}  // namespace PAT_ABI
}  // namespace pat
