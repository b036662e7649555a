#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

// Serial reference kernels: straight nested loops, no tiling, no OpenMP.
// Tests use them as the independent oracle for the parallel kernels and (in
// double precision) for finite-difference forward recomputation; the benchmark
// target compares their throughput against cas/kernels.hpp. Keep them dumb.

namespace cas::ref {

// weight layout (c_out, c_in/groups, k_h, k_w); optional MAC counter counts
// one increment per multiply-accumulate executed.
template <class T>
void conv2d(const T* in, int batch, int c_in, int h_in, int w_in, const T* weight, int c_out,
            int k_h, int k_w, const T* bias, int stride, int dilation, int pad_h, int pad_w,
            int groups, T* out, int h_out, int w_out, long long* macs = nullptr) {
    const int cpg_in = c_in / groups;
    const int cpg_out = c_out / groups;
    long long count = 0;
    for (int b = 0; b < batch; ++b)
        for (int co = 0; co < c_out; ++co)
            for (int oy = 0; oy < h_out; ++oy)
                for (int ox = 0; ox < w_out; ++ox) {
                    T acc = bias ? bias[co] : T(0);
                    const int grp = co / cpg_out;
                    for (int cil = 0; cil < cpg_in; ++cil)
                        for (int kh = 0; kh < k_h; ++kh)
                            for (int kw = 0; kw < k_w; ++kw) {
                                const int iy = oy * stride + kh * dilation - pad_h;
                                const int ix = ox * stride + kw * dilation - pad_w;
                                if (iy < 0 || iy >= h_in || ix < 0 || ix >= w_in) continue;
                                const int ci = grp * cpg_in + cil;
                                acc += weight[((int64_t(co) * cpg_in + cil) * k_h + kh) * k_w +
                                              kw] *
                                       in[((int64_t(b) * c_in + ci) * h_in + iy) * w_in + ix];
                                ++count;
                            }
                    out[((int64_t(b) * c_out + co) * h_out + oy) * w_out + ox] = acc;
                }
    if (macs) *macs += count;
}

template <class T>
void avg_pool(const T* in, int batch, int ch, int h_in, int w_in, int k_h, int k_w, int s_h,
              int s_w, int pad_h, int pad_w, T* out, int h_out, int w_out) {
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < ch; ++c)
            for (int oy = 0; oy < h_out; ++oy)
                for (int ox = 0; ox < w_out; ++ox) {
                    T acc = T(0);
                    int count = 0;
                    for (int ky = 0; ky < k_h; ++ky)
                        for (int kx = 0; kx < k_w; ++kx) {
                            const int iy = oy * s_h + ky - pad_h;
                            const int ix = ox * s_w + kx - pad_w;
                            if (iy < 0 || iy >= h_in || ix < 0 || ix >= w_in) continue;
                            acc += in[((int64_t(b) * ch + c) * h_in + iy) * w_in + ix];
                            ++count;
                        }
                    out[((int64_t(b) * ch + c) * h_out + oy) * w_out + ox] =
                        acc / T(std::max(1, count));
                }
}

template <class T>
void max_pool(const T* in, int batch, int ch, int h_in, int w_in, int k_h, int k_w, int s_h,
              int s_w, int pad_h, int pad_w, T* out, int h_out, int w_out) {
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < ch; ++c)
            for (int oy = 0; oy < h_out; ++oy)
                for (int ox = 0; ox < w_out; ++ox) {
                    bool seen = false;
                    T best = T(0);
                    for (int ky = 0; ky < k_h; ++ky)
                        for (int kx = 0; kx < k_w; ++kx) {
                            const int iy = oy * s_h + ky - pad_h;
                            const int ix = ox * s_w + kx - pad_w;
                            if (iy < 0 || iy >= h_in || ix < 0 || ix >= w_in) continue;
                            const T v = in[((int64_t(b) * ch + c) * h_in + iy) * w_in + ix];
                            if (!seen || v > best) {
                                best = v;
                                seen = true;
                            }
                        }
                    out[((int64_t(b) * ch + c) * h_out + oy) * w_out + ox] = best;
                }
}

// One interpolated sample (the pointwise oracle for bilinear_resize).
template <class T>
T bilinear_sample(const T* plane, int h_in, int w_in, int oy, int ox, int h_out, int w_out) {
    auto coord = [](int o, int out_extent, int in_extent, int& lo, int& hi, T& wgt) {
        double s = (double(o) + 0.5) * double(in_extent) / double(out_extent) - 0.5;
        s = std::min(std::max(s, 0.0), double(in_extent - 1));
        lo = int(s);
        hi = std::min(lo + 1, in_extent - 1);
        wgt = T(s - lo);
    };
    int y0, y1, x0, x1;
    T wy, wx;
    coord(oy, h_out, h_in, y0, y1, wy);
    coord(ox, w_out, w_in, x0, x1, wx);
    const T a = plane[int64_t(y0) * w_in + x0];
    const T b = plane[int64_t(y0) * w_in + x1];
    const T c = plane[int64_t(y1) * w_in + x0];
    const T d = plane[int64_t(y1) * w_in + x1];
    const T top = a + wx * (b - a);
    const T bot = c + wx * (d - c);
    return top + wy * (bot - top);
}

template <class T>
void bilinear(const T* in, int batch, int ch, int h_in, int w_in, T* out, int h_out,
              int w_out) {
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < ch; ++c) {
            const T* iplane = in + (int64_t(b) * ch + c) * h_in * w_in;
            T* oplane = out + (int64_t(b) * ch + c) * h_out * w_out;
            for (int oy = 0; oy < h_out; ++oy)
                for (int ox = 0; ox < w_out; ++ox)
                    oplane[int64_t(oy) * w_out + ox] =
                        bilinear_sample(iplane, h_in, w_in, oy, ox, h_out, w_out);
        }
}

template <class T>
void batch_norm_train(const T* in, int batch, int ch, int h, int w, const T* gamma,
                      const T* beta, T eps, T* out) {
    const int64_t plane = int64_t(h) * w;
    const int64_t n = int64_t(batch) * plane;
    for (int c = 0; c < ch; ++c) {
        T s = T(0), s2 = T(0);
        for (int b = 0; b < batch; ++b) {
            const T* p = in + (int64_t(b) * ch + c) * plane;
            for (int64_t i = 0; i < plane; ++i) {
                s += p[i];
                s2 += p[i] * p[i];
            }
        }
        const T m = s / T(n);
        const T v = std::max(T(0), s2 / T(n) - m * m);
        const T inv = T(1) / std::sqrt(v + eps);
        for (int b = 0; b < batch; ++b) {
            const T* p = in + (int64_t(b) * ch + c) * plane;
            T* q = out + (int64_t(b) * ch + c) * plane;
            for (int64_t i = 0; i < plane; ++i) q[i] = gamma[c] * (p[i] - m) * inv + beta[c];
        }
    }
}

template <class T>
void batch_norm_eval(const T* in, int batch, int ch, int h, int w, const T* gamma,
                     const T* beta, const T* running_mean, const T* running_var, T eps,
                     T* out) {
    const int64_t plane = int64_t(h) * w;
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < ch; ++c) {
            const T inv = T(1) / std::sqrt(running_var[c] + eps);
            const T* p = in + (int64_t(b) * ch + c) * plane;
            T* q = out + (int64_t(b) * ch + c) * plane;
            for (int64_t i = 0; i < plane; ++i)
                q[i] = gamma[c] * (p[i] - running_mean[c]) * inv + beta[c];
        }
}

template <class T>
T softmax_ce(const T* logits, int batch, int classes, int h, int w, const int32_t* labels,
             int ignore) {
    const int64_t plane = int64_t(h) * w;
    T total = T(0);
    int64_t count = 0;
    for (int b = 0; b < batch; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const int32_t lab = labels[(int64_t(b) * h + y) * w + x];
                if (lab == ignore) continue;
                const T* px = logits + int64_t(b) * classes * plane + int64_t(y) * w + x;
                T m = px[0];
                for (int c = 1; c < classes; ++c) m = std::max(m, px[int64_t(c) * plane]);
                T lse = T(0);
                for (int c = 0; c < classes; ++c)
                    lse += std::exp(px[int64_t(c) * plane] - m);
                total += m + std::log(lse) - px[int64_t(lab) * plane];
                ++count;
            }
    return count ? total / T(count) : T(0);
}

template <class T>
std::vector<T> softmax(const std::vector<T>& scores) {
    T m = scores[0];
    for (T s : scores) m = std::max(m, s);
    std::vector<T> out(scores.size());
    T z = T(0);
    for (size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp(scores[i] - m);
        z += out[i];
    }
    for (T& v : out) v /= z;
    return out;
}

}  // namespace cas::ref
