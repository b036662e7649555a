#pragma once

#include <cstdint>

// Data-parallel CPU kernels. Every loop is partitioned over independent output
// slots with serial inner accumulation, so results are bit-identical for any
// thread count. Backward kernels accumulate (+=) into the destination buffer.
// The serial mirror used by tests and the benchmark lives in cas/reference.hpp.

namespace cas::kernels {

struct ConvGeom {
    int batch, c_in, h_in, w_in;
    int c_out, k_h, k_w;
    int stride, dilation, pad_h, pad_w, groups;
    int h_out, w_out;
};

void conv2d_forward(const ConvGeom& g, const float* in, const float* weight,
                    const float* bias, float* out);
void conv2d_backward_input(const ConvGeom& g, const float* dout, const float* weight,
                           float* din);
void conv2d_backward_weight(const ConvGeom& g, const float* dout, const float* in,
                            float* dweight);
void conv2d_backward_bias(const ConvGeom& g, const float* dout, float* dbias);

struct PoolGeom {
    int batch, ch, h_in, w_in;
    int k_h, k_w, s_h, s_w, pad_h, pad_w;
    int h_out, w_out;
};

void avg_pool_forward(const PoolGeom& g, const float* in, float* out);
void avg_pool_backward(const PoolGeom& g, const float* dout, float* din);
// argmax holds the flat in-plane index (iy * w_in + ix) of each window maximum;
// ties resolve to the first element in row-major scan order.
void max_pool_forward(const PoolGeom& g, const float* in, float* out, int32_t* argmax);
void max_pool_backward(const PoolGeom& g, const float* dout, const int32_t* argmax,
                       float* din);

struct ResizeGeom {
    int batch, ch, h_in, w_in, h_out, w_out;
};

void bilinear_forward(const ResizeGeom& g, const float* in, float* out);
void bilinear_backward(const ResizeGeom& g, const float* dout, float* din);

// Per-channel biased statistics over (batch, h, w).
void bn_stats(int batch, int ch, int h, int w, const float* in, float* mean, float* var);
void bn_normalize(int batch, int ch, int h, int w, const float* in, const float* mean,
                  const float* var, const float* gamma, const float* beta, float eps,
                  float* out);
// Train-mode backward (batch statistics entered the forward).
void bn_backward_train(int batch, int ch, int h, int w, const float* in, const float* mean,
                       const float* var, const float* gamma, float eps, const float* dout,
                       float* din, float* dgamma, float* dbeta);
void bn_backward_eval(int batch, int ch, int h, int w, const float* in, const float* mean,
                      const float* var, const float* gamma, float eps, const float* dout,
                      float* din, float* dgamma, float* dbeta);

// Returns the summed loss (double) and the number of counted pixels.
double softmax_ce_forward(int batch, int classes, int h, int w, const float* logits,
                          const int32_t* labels, int ignore, int64_t* counted);
void softmax_ce_backward(int batch, int classes, int h, int w, const float* logits,
                         const int32_t* labels, int ignore, float upstream_over_count,
                         float* dlogits);

void relu_forward(int64_t n, const float* in, float* out);
void relu_backward(int64_t n, const float* in, const float* dout, float* din);

void add_forward(int64_t n, const float* a, const float* b, float* out);
void mul_forward(int64_t n, const float* a, const float* b, float* out);
void axpy(int64_t n, float alpha, const float* x, float* y);  // y += alpha * x

double sum_all(int64_t n, const float* x);

}  // namespace cas::kernels
