#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cas/util.hpp"

namespace cas {

struct Shape {
    int b = 0, c = 0, h = 0, w = 0;

    int64_t numel() const { return int64_t(b) * c * h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

// Integer label plane per image, values in [0, num_classes) or the ignore value.
struct LabelMap {
    int b = 0, h = 0, w = 0;
    std::vector<int32_t> v;

    int64_t numel() const { return int64_t(b) * h * w; }
    int32_t at(int bi, int y, int x) const { return v[(int64_t(bi) * h + y) * w + x]; }
    int32_t& at(int bi, int y, int x) { return v[(int64_t(bi) * h + y) * w + x]; }
};

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;  // empty until first accumulation
    bool requires_grad = false;
    uint64_t seq = 0;  // creation order; a valid topological order of the tape
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0f);
    }
};

}  // namespace detail

// Reverse-mode autodiff is on by default; suspend it for eval/benchmark forwards.
bool grad_enabled();

class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// Value-semantics handle onto a graph node. Copies share storage.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(const Shape& s, bool requires_grad = false);
    static Tensor full(const Shape& s, float v, bool requires_grad = false);
    static Tensor from_data(const Shape& s, std::vector<float> data, bool requires_grad = false);
    static Tensor scalar(float v);
    static Tensor randn(const Shape& s, Rng& rng, double stddev, bool requires_grad = false);

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    int64_t numel() const { return n_->shape.numel(); }

    float* data() { return n_->value.data(); }
    const float* data() const { return n_->value.data(); }
    std::span<const float> values() const { return n_->value; }
    std::vector<float>& raw() { return n_->value; }

    float item() const;

    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool rg) { n_->requires_grad = rg; }

    bool has_grad() const { return !n_->grad.empty(); }
    std::span<const float> grad() const;  // zero-filled view if never touched
    float* grad_data() {
        n_->ensure_grad();
        return n_->grad.data();
    }
    void zero_grad() {
        if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0f);
    }

    bool same_node(const Tensor& o) const { return n_ == o.n_; }
    detail::TensorNode* node() const { return n_.get(); }

    // Detached copy of the values (leaf, no history).
    Tensor clone_detached() const;

  private:
    friend Tensor make_result(const Shape&, std::vector<Tensor>, std::function<void(detail::TensorNode&)>);
    std::shared_ptr<detail::TensorNode> n_;
};

// Records a node if autodiff is on and any parent requires grad.
Tensor make_result(const Shape& s, std::vector<Tensor> parents,
                   std::function<void(detail::TensorNode&)> backward_fn);

// Runs one reverse pass from a scalar loss; leaf grads accumulate across calls.
void backward(const Tensor& loss);

// Leaves (requires_grad) reachable from `root`, in first-visit order.
std::vector<Tensor> collect_leaves(const Tensor& root);

// ---- padding policy ----------------------------------------------------
// "Same" policy: output extent is ceil(extent / stride); returns the minimal
// symmetric padding achieving that. Valid for every kernel this project uses.
int same_padding(int extent, int kernel, int stride, int dilation);
int conv_out_extent(int extent, int kernel, int stride, int dilation, int pad);

// ---- primitive operations ----------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
              int dilation, int pad_h, int pad_w, int groups = 1);
Tensor separable_conv2d(const Tensor& input, const Tensor& depthwise_kernel,
                        const Tensor& pointwise_kernel, const Tensor& bias, int stride);
Tensor avg_pool2d(const Tensor& input, int kernel, int stride);
Tensor max_pool2d(const Tensor& input, int kernel, int stride);
// Rectangular window/stride variant (pyramid pooling with clamped windows).
Tensor avg_pool2d_rect(const Tensor& input, int k_h, int k_w, int s_h, int s_w);
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);

struct BatchNormState {
    std::vector<float> running_mean;
    std::vector<float> running_var;
    float momentum = 0.1f;

    void init(int channels) {
        running_mean.assign(channels, 0.0f);
        running_var.assign(channels, 1.0f);
    }
};

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool train, float eps = 1e-5f);

Tensor concat_channels(std::span<const Tensor> inputs);
Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float s);
Tensor sum(const Tensor& x);  // scalar

// Softmax over the channel axis at each (b, y, x) location.
Tensor softmax_channels(const Tensor& x);

// weights: (1, K, 1, 1); parts.size() <= K. Returns sum_i weights[i] * parts[i];
// missing trailing slots contribute a zero tensor (the "none" slot).
Tensor mix(const Tensor& weights, std::span<const Tensor> parts);

// Scalar dot of a (1, K, 1, 1) tensor with fixed coefficients.
Tensor dot_const(const Tensor& weights, std::span<const double> coeffs);

// Mean over non-ignored pixels of -log softmax(logits)[label].
Tensor softmax_ce_loss(const Tensor& logits, const LabelMap& labels, int ignore_label = 255);

}  // namespace cas
