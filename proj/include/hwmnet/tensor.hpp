#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hwmnet {

struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::int64_t numel() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Dense 4-D tensor over S (float for train/infer, double for gradient
/// checks). Data is shared between copies; the gradient buffer lives in a
/// shared cell so every copy of a tensor sees the same accumulated gradient.
/// Tensors are immutable after construction except for the grad buffer and
/// in-place parameter updates performed by the optimizer between passes.
template <typename S>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape s);
    static Tensor full(Shape s, S value);
    static Tensor from_data(Shape s, std::vector<S> values);

    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return shape_.numel(); }
    bool defined() const { return data_ != nullptr; }

    std::span<const S> data() const { return {data_->data(), data_->size()}; }
    // For builders, the optimizer and tests; never called during a recorded pass.
    std::span<S> mutable_data() { return {data_->data(), data_->size()}; }

    bool requires_grad() const { return grad_ != nullptr; }
    void set_requires_grad(bool on);
    bool has_grad() const { return grad_ && !grad_->buf.empty(); }
    std::span<const S> grad() const;
    std::span<S> ensure_grad();   // allocates a zero-filled buffer on first use
    void zero_grad();

    std::int64_t index(int in, int ic, int iy, int ix) const {
        return ((static_cast<std::int64_t>(in) * shape_.c + ic) * shape_.h + iy) * shape_.w + ix;
    }
    S at(int in, int ic, int iy, int ix) const { return (*data_)[index(in, ic, iy, ix)]; }

    /// Deep copy of the data; the copy does not require grad.
    Tensor clone() const;
    template <typename T>
    Tensor<T> cast() const;

private:
    struct GradCell {
        std::vector<S> buf;
    };

    Shape shape_{};
    std::shared_ptr<std::vector<S>> data_;
    std::shared_ptr<GradCell> grad_;
};

template <typename S>
template <typename T>
Tensor<T> Tensor<S>::cast() const {
    std::vector<T> values(static_cast<std::size_t>(numel()));
    auto src = data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = static_cast<T>(src[i]);
    }
    return Tensor<T>::from_data(shape_, std::move(values));
}

/// Reverse-mode tape. Every differentiable operation appends one node in
/// construction order; backward() fires the nodes in exact reverse order, so
/// all consumers of a tensor have accumulated into its grad buffer before the
/// producing node's own rule runs. One Graph per forward pass; passing a null
/// Graph* to an operation disables recording (inference mode).
template <typename S>
class Graph {
public:
    void push(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
    std::size_t size() const { return nodes_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and replays the tape backwards. loss must be
    /// a scalar (numel == 1) produced while this graph was recording.
    void backward(Tensor<S>& loss);

private:
    std::vector<std::function<void()>> nodes_;
};

// ---- primitive differentiable operations -------------------------------
// All operations validate shapes (std::invalid_argument on violation),
// allocate a fresh output, and record a backward node when `g` is non-null
// and any input requires grad.

/// 2-D convolution, zero padding, odd square kernels. weight is (co, ci, k, k)
/// stored as Shape{co, ci, k, k}; bias is (1, co, 1, 1). x has ci*groups
/// channels and co must be divisible by groups.
template <typename S>
Tensor<S> conv2d(Graph<S>* g, const Tensor<S>& x, const Tensor<S>& weight,
                 const Tensor<S>& bias, int padding, int groups = 1);

template <typename S>
Tensor<S> relu(Graph<S>* g, const Tensor<S>& x);

/// Leaky path with a learnable per-channel slope; alpha is (1, c, 1, 1).
template <typename S>
Tensor<S> prelu(Graph<S>* g, const Tensor<S>& x, const Tensor<S>& alpha);

template <typename S>
Tensor<S> sigmoid(Graph<S>* g, const Tensor<S>& x);

/// Elementwise x + y and x * y. Each dimension of y must equal x's or be 1
/// (broadcast); covers per-channel (n,c,1,1) gates and per-position (n,1,h,w)
/// maps. Output has x's shape.
template <typename S>
Tensor<S> add(Graph<S>* g, const Tensor<S>& x, const Tensor<S>& y);
template <typename S>
Tensor<S> mul(Graph<S>* g, const Tensor<S>& x, const Tensor<S>& y);

template <typename S>
Tensor<S> scale(Graph<S>* g, const Tensor<S>& x, S factor);

/// Spatial mean per (n, c): output is (n, c, 1, 1).
template <typename S>
Tensor<S> global_avg_pool(Graph<S>* g, const Tensor<S>& x);

/// Channel reductions per spatial position: output is (n, 1, h, w).
template <typename S>
Tensor<S> channel_mean(Graph<S>* g, const Tensor<S>& x);
template <typename S>
Tensor<S> channel_max(Graph<S>* g, const Tensor<S>& x);

template <typename S>
Tensor<S> concat_channels(Graph<S>* g, const std::vector<Tensor<S>>& parts);
template <typename S>
std::vector<Tensor<S>> split_channels(Graph<S>* g, const Tensor<S>& x,
                                      const std::vector<int>& sizes);

/// Softmax across L branch groups: channel l*c + j holds branch l of logical
/// channel j. For every (n, j, y, x) the L outputs are positive and sum to 1.
template <typename S>
Tensor<S> softmax_over_branches(Graph<S>* g, const Tensor<S>& logits, int branches);

/// Sum of all elements as a (1,1,1,1) scalar tensor.
template <typename S>
Tensor<S> sum_all(Graph<S>* g, const Tensor<S>& x);

template <typename S>
using GraphBuilder = std::function<Tensor<S>(Graph<S>&, const Tensor<S>&)>;

/// Central-difference gradient check. Builds f once with grad recording to get
/// the analytic gradient of the scalar output w.r.t. x, then perturbs every
/// element of x by +-eps. Returns the max over elements of
/// |analytic - fd| / max(|analytic|, |fd|, 1e-12). Meaningful in double
/// precision only; eps must lie in [1e-7, 1e-4].
template <typename S>
double grad_check(const GraphBuilder<S>& f, const Tensor<S>& x, double eps);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;
using GraphF = Graph<float>;
using GraphD = Graph<double>;

}  // namespace hwmnet
