#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "effuse/errors.hpp"
#include "effuse/rng.hpp"

namespace effuse {

namespace detail {

struct TensorNode {
    std::vector<std::int64_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until backward reaches this node
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Accumulates into parents' grads given this node's grad. Set only when
    // requires_grad; a detached branch records nothing.
    std::function<void(TensorNode&)> backprop;
};

}  // namespace detail

// Dense row-major tensor of 64-bit reals with reverse-mode autodiff.
// Value-semantics handle: copies share the underlying node. Each op records
// the links needed for backward; graphs are rebuilt every forward pass.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::int64_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::int64_t> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<std::int64_t> shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor randn(std::vector<std::int64_t> shape, Rng& rng, double stddev, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::int64_t>& shape() const;
    std::int64_t size() const;
    std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
    std::int64_t rows() const;
    std::int64_t cols() const;

    std::span<const double> data() const;
    // Leaf mutation between graphs (parameter updates, finite differences).
    std::span<double> mutable_data();

    double value() const;                               // scalar only
    double at(std::int64_t i, std::int64_t j) const;    // rank-2 only

    bool requires_grad() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    // Same data, no gradient tracking, no history.
    Tensor detached() const;

    // Identity of the underlying node; used for parameter manifests.
    const void* id() const { return node_.get(); }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    detail::TensorNode& node() const;

    std::shared_ptr<detail::TensorNode> node_;

    friend struct OpAccess;
};

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// Adds bias[d] to every row of x[T x d].
Tensor add_row(const Tensor& x, const Tensor& bias);
Tensor tanh(const Tensor& x);
// Softmax over a rank-1 vector (layer-weight normalization).
Tensor softmax(const Tensor& logits);
// sum_k weights[k] * layers[k]; every layer shares one shape.
Tensor weighted_sum(const std::vector<Tensor>& layers, const Tensor& weights);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::int64_t begin, std::int64_t count);
// Means over groups of `factor` consecutive rows; trailing remainder dropped.
Tensor mean_pool_rows(const Tensor& x, std::int64_t factor);
// 1-D convolution over rows of x[T x din], kernel [3 x din x dout], pad 1,
// output frames = ceil(T / stride).
Tensor conv1d_w3(const Tensor& x, const Tensor& kernel, const Tensor& bias, std::int64_t stride);
// Mean softmax cross-entropy over frames; labels in [0, V).
Tensor cross_entropy_mean(const Tensor& logits, std::span<const int> labels);
// Mean absolute error over all elements; subgradient at zero is zero.
Tensor l1_mean(const Tensor& a, const Tensor& b);
Tensor sum_all(const Tensor& x);

// Populates grad on every requires_grad ancestor of a scalar loss.
void backward(const Tensor& loss);

// ---- verification oracle ---------------------------------------------------

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    int checked = 0;
    int skipped = 0;  // elements astride a subgradient kink
};

// Central-difference check of the autodiff gradient of `forward()` with
// respect to `param`. `forward` must rebuild its graph from the current
// contents of `param` on every call and return a scalar.
FiniteDiffReport finite_diff_check(const std::function<Tensor()>& forward, Tensor param, double eps);

std::string shape_string(const std::vector<std::int64_t>& shape);

}  // namespace effuse
