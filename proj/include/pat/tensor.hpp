#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pat/scalar.hpp"

namespace pat {
inline namespace PAT_ABI {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

// Reverse-mode closure: reads out.grad and accumulates into the parents.
using BackwardFn = std::function<void(TensorImpl& out)>;

struct TensorImpl {
    Shape shape;
    std::vector<Scalar> data;
    std::vector<Scalar> grad;  // empty until something accumulates into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    BackwardFn backward;

    bool is_leaf() const { return parents.empty(); }
    // Zero-filled on first use.
    std::span<Scalar> grad_buffer();
};

// Dense row-major tensor handle. Copies alias the same storage; use clone()
// for a deep copy.
class Tensor {
   public:
    Tensor() = default;
    explicit Tensor(Shape shape, Scalar fill = 0, bool requires_grad = false);
    Tensor(Shape shape, std::vector<Scalar> data, bool requires_grad = false);

    static Tensor scalar(Scalar v, bool requires_grad = false);
    static Tensor parameter(Shape shape, std::vector<Scalar> data);

    bool defined() const { return static_cast<bool>(impl_); }
    const Shape& shape() const;
    std::size_t dim(std::size_t axis) const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;

    std::span<Scalar> data();
    std::span<const Scalar> data() const;
    Scalar item() const;
    Scalar at(std::size_t flat) const { return data()[flat]; }

    bool requires_grad() const;
    bool has_grad() const;
    // Empty span when no gradient has been accumulated.
    std::span<const Scalar> grad() const;
    std::span<Scalar> mutable_grad();
    void zero_grad();

    // Same values, no history, requires_grad = false.
    Tensor detach() const;
    Tensor clone() const;

    TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

   private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    friend Tensor make_op_result(const char*, Shape, std::vector<Scalar>, const std::vector<Tensor>&,
                                 BackwardFn);

    std::shared_ptr<TensorImpl> impl_;
};

// Graph recording switch. Thread-local.
bool grad_enabled();

class NoGradGuard {
   public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

// Values computed under stop-gradient (guidance such as pseudo-masks).
// A finite-difference check records them at the base point and replays them
// at perturbed points, so both sides see the same function.
class DetachedTape {
   public:
    enum class Mode { Record, Replay };

    DetachedTape(Mode mode) : mode_(mode) {}
    Mode mode() const { return mode_; }
    void set_mode(Mode m) {
        mode_ = m;
        cursor_ = 0;
    }
    std::size_t size() const { return values_.size(); }
    Tensor take(const std::function<Tensor()>& compute);

   private:
    Mode mode_;
    std::vector<Tensor> values_;
    std::size_t cursor_ = 0;
};

class DetachedTapeScope {
   public:
    explicit DetachedTapeScope(DetachedTape* tape);
    ~DetachedTapeScope();
    DetachedTapeScope(const DetachedTapeScope&) = delete;
    DetachedTapeScope& operator=(const DetachedTapeScope&) = delete;

   private:
    DetachedTape* previous_;
};

// compute() without gradient tracking, routed through the active tape if any.
Tensor detached(const std::function<Tensor()>& compute);

// Builds an op output. Records history when grad mode is on and any input
// requires grad; rejects non-finite outputs with NumericError naming `op`.
Tensor make_op_result(const char* op, Shape shape, std::vector<Scalar> data, const std::vector<Tensor>& inputs,
                      BackwardFn backward);

// Runs reverse-mode accumulation from a scalar loss. Leaf gradients
// accumulate across calls; intermediate gradients are recomputed each call.
void backward(const Tensor& loss);

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]·[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m,k]·[n,k]ᵀ
Tensor transpose(const Tensor& a);                   // 2-D only
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
std::vector<Tensor> split(const Tensor& a, std::size_t axis, const std::vector<std::size_t>& sizes);

// ---- elementwise ----------------------------------------------------------
// Binary ops accept b with the same shape as a, a trailing-suffix shape of a
// (row broadcast), or a single element.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar s);
Tensor add_scalar(const Tensor& a, Scalar s);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor log10(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);  // erf form

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a);   // shape {1}
Tensor mean(const Tensor& a);  // shape {1}
Tensor sum_axis(const Tensor& a, std::size_t axis);
Tensor mean_axis(const Tensor& a, std::size_t axis);

// ---- nn primitives --------------------------------------------------------

Tensor softmax_lastdim(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps = Scalar(1e-5));
// Pairwise cosine between rows: [m,d] x [n,d] -> [m,n]. Zero-norm rows give 0.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
// Mean 2-class (or C-class) cross-entropy over rows of logits [N,C].
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);

struct MaxResult {
    Tensor values;                     // [m]
    std::vector<std::size_t> indices;  // argmax per row, lowest index on ties
};
// Max over the last axis of a 2-D tensor; gradient goes to the argmax only.
MaxResult max_lastdim(const Tensor& a);
std::vector<std::size_t> argmax_lastdim(const Tensor& a);

// Indices of the k largest entries, ordered by value descending then index
// ascending (ties resolve to the lowest index).
std::vector<std::size_t> topk_indices(std::span<const Scalar> row, std::size_t k);

// out[r, j] = a[r, index[r][j]] for 2-D a.
Tensor gather_lastdim(const Tensor& a, const std::vector<std::vector<std::size_t>>& index);
// Copy of base with base[r, index[r][j]] replaced by values[r, j].
Tensor scatter_lastdim(const Tensor& base, const std::vector<std::vector<std::size_t>>& index, const Tensor& values);

// ---- init helpers ---------------------------------------------------------

std::vector<Scalar> xavier_uniform(std::size_t fan_in, std::size_t fan_out, std::size_t count, std::mt19937_64& rng);
std::vector<Scalar> normal_init(std::size_t count, double stddev, std::mt19937_64& rng);

}  // namespace PAT_ABI
}  // namespace pat
