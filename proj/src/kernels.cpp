#include "cas/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace cas::kernels {

namespace {

// Fork-join below this many output-element * inner-op products is a net loss
// at the tensor sizes this project runs.
constexpr int64_t kParallelWork = 1 << 15;

inline int64_t idx4(int a, int b, int c, int d, int db, int dc, int dd) {
    return ((int64_t(a) * db + b) * dc + c) * dd + d;
}

}  // namespace

void conv2d_forward(const ConvGeom& g, const float* in, const float* weight,
                    const float* bias, float* out) {
    const int cpg_in = g.c_in / g.groups;
    const int cpg_out = g.c_out / g.groups;
    const int64_t inner = int64_t(cpg_in) * g.k_h * g.k_w;
    const int64_t work = int64_t(g.batch) * g.c_out * g.h_out * g.w_out * inner;

#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelWork)
    for (int b = 0; b < g.batch; ++b) {
        for (int co = 0; co < g.c_out; ++co) {
            const int grp = co / cpg_out;
            float* oplane = out + idx4(b, co, 0, 0, g.c_out, g.h_out, g.w_out);
            const float bv = bias ? bias[co] : 0.0f;
            for (int64_t i = 0; i < int64_t(g.h_out) * g.w_out; ++i) oplane[i] = bv;
            for (int cil = 0; cil < cpg_in; ++cil) {
                const int ci = grp * cpg_in + cil;
                const float* iplane = in + idx4(b, ci, 0, 0, g.c_in, g.h_in, g.w_in);
                for (int kh = 0; kh < g.k_h; ++kh) {
                    for (int kw = 0; kw < g.k_w; ++kw) {
                        const float wv =
                            weight[idx4(co, cil, kh, kw, cpg_in, g.k_h, g.k_w)];
                        if (wv == 0.0f) continue;
                        for (int oy = 0; oy < g.h_out; ++oy) {
                            const int iy = oy * g.stride + kh * g.dilation - g.pad_h;
                            if (iy < 0 || iy >= g.h_in) continue;
                            // valid ox range for this kw
                            int ox_lo = 0, ox_hi = g.w_out;
                            {
                                const int off = kw * g.dilation - g.pad_w;
                                // need 0 <= ox*stride + off < w_in
                                if (off < 0)
                                    ox_lo = (-off + g.stride - 1) / g.stride;
                                ox_hi = std::min<int64_t>(
                                    g.w_out, (int64_t(g.w_in) - off + g.stride - 1) / g.stride);
                            }
                            if (ox_lo >= ox_hi) continue;
                            const float* irow = iplane + int64_t(iy) * g.w_in +
                                                (int64_t(ox_lo) * g.stride + kw * g.dilation -
                                                 g.pad_w);
                            float* orow = oplane + int64_t(oy) * g.w_out;
                            if (g.stride == 1) {
                                for (int ox = ox_lo; ox < ox_hi; ++ox)
                                    orow[ox] += wv * irow[ox - ox_lo];
                            } else {
                                for (int ox = ox_lo; ox < ox_hi; ++ox)
                                    orow[ox] += wv * irow[int64_t(ox - ox_lo) * g.stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(const ConvGeom& g, const float* dout, const float* weight,
                           float* din) {
    const int cpg_in = g.c_in / g.groups;
    const int cpg_out = g.c_out / g.groups;
    const int64_t work = int64_t(g.batch) * g.c_in * g.h_in * g.w_in * cpg_out * g.k_h;

    // Gather form: each input element sums the output positions it fed, so the
    // accumulation order is fixed regardless of scheduling.
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelWork)
    for (int b = 0; b < g.batch; ++b) {
        for (int ci = 0; ci < g.c_in; ++ci) {
            const int grp = ci / cpg_in;
            const int cil = ci % cpg_in;
            float* dplane = din + idx4(b, ci, 0, 0, g.c_in, g.h_in, g.w_in);
            for (int iy = 0; iy < g.h_in; ++iy) {
                for (int ix = 0; ix < g.w_in; ++ix) {
                    float acc = 0.0f;
                    for (int kh = 0; kh < g.k_h; ++kh) {
                        const int ty = iy + g.pad_h - kh * g.dilation;
                        if (ty < 0 || ty % g.stride) continue;
                        const int oy = ty / g.stride;
                        if (oy >= g.h_out) continue;
                        for (int kw = 0; kw < g.k_w; ++kw) {
                            const int tx = ix + g.pad_w - kw * g.dilation;
                            if (tx < 0 || tx % g.stride) continue;
                            const int ox = tx / g.stride;
                            if (ox >= g.w_out) continue;
                            for (int col = 0; col < cpg_out; ++col) {
                                const int co = grp * cpg_out + col;
                                acc += dout[idx4(b, co, oy, ox, g.c_out, g.h_out, g.w_out)] *
                                       weight[idx4(co, cil, kh, kw, cpg_in, g.k_h, g.k_w)];
                            }
                        }
                    }
                    dplane[int64_t(iy) * g.w_in + ix] += acc;
                }
            }
        }
    }
}

void conv2d_backward_weight(const ConvGeom& g, const float* dout, const float* in,
                            float* dweight) {
    const int cpg_in = g.c_in / g.groups;
    const int cpg_out = g.c_out / g.groups;
    const int64_t work =
        int64_t(g.c_out) * cpg_in * g.k_h * g.k_w * g.batch * g.h_out * g.w_out;

#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelWork)
    for (int co = 0; co < g.c_out; ++co) {
        for (int cil = 0; cil < cpg_in; ++cil) {
            const int grp = co / cpg_out;
            const int ci = grp * cpg_in + cil;
            for (int kh = 0; kh < g.k_h; ++kh) {
                for (int kw = 0; kw < g.k_w; ++kw) {
                    double acc = 0.0;
                    for (int b = 0; b < g.batch; ++b) {
                        const float* iplane =
                            in + idx4(b, ci, 0, 0, g.c_in, g.h_in, g.w_in);
                        const float* oplane =
                            dout + idx4(b, co, 0, 0, g.c_out, g.h_out, g.w_out);
                        for (int oy = 0; oy < g.h_out; ++oy) {
                            const int iy = oy * g.stride + kh * g.dilation - g.pad_h;
                            if (iy < 0 || iy >= g.h_in) continue;
                            int ox_lo = 0, ox_hi = g.w_out;
                            const int off = kw * g.dilation - g.pad_w;
                            if (off < 0) ox_lo = (-off + g.stride - 1) / g.stride;
                            ox_hi = std::min<int64_t>(
                                g.w_out, (int64_t(g.w_in) - off + g.stride - 1) / g.stride);
                            if (ox_lo >= ox_hi) continue;
                            const float* irow =
                                iplane + int64_t(iy) * g.w_in + int64_t(ox_lo) * g.stride + off;
                            const float* orow = oplane + int64_t(oy) * g.w_out;
                            float facc = 0.0f;
                            if (g.stride == 1) {
                                for (int ox = ox_lo; ox < ox_hi; ++ox)
                                    facc += orow[ox] * irow[ox - ox_lo];
                            } else {
                                for (int ox = ox_lo; ox < ox_hi; ++ox)
                                    facc += orow[ox] * irow[int64_t(ox - ox_lo) * g.stride];
                            }
                            acc += facc;
                        }
                    }
                    dweight[idx4(co, cil, kh, kw, cpg_in, g.k_h, g.k_w)] += float(acc);
                }
            }
        }
    }
}

void conv2d_backward_bias(const ConvGeom& g, const float* dout, float* dbias) {
#pragma omp parallel for schedule(static) if (int64_t(g.c_out) * g.batch * g.h_out * g.w_out > kParallelWork)
    for (int co = 0; co < g.c_out; ++co) {
        double acc = 0.0;
        for (int b = 0; b < g.batch; ++b) {
            const float* oplane = dout + idx4(b, co, 0, 0, g.c_out, g.h_out, g.w_out);
            for (int64_t i = 0; i < int64_t(g.h_out) * g.w_out; ++i) acc += oplane[i];
        }
        dbias[co] += float(acc);
    }
}

void avg_pool_forward(const PoolGeom& g, const float* in, float* out) {
    const int64_t work = int64_t(g.batch) * g.ch * g.h_out * g.w_out * g.k_h * g.k_w;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelWork)
    for (int b = 0; b < g.batch; ++b) {
        for (int c = 0; c < g.ch; ++c) {
            const float* iplane = in + idx4(b, c, 0, 0, g.ch, g.h_in, g.w_in);
            float* oplane = out + idx4(b, c, 0, 0, g.ch, g.h_out, g.w_out);
            for (int oy = 0; oy < g.h_out; ++oy) {
                const int y0 = std::max(0, oy * g.s_h - g.pad_h);
                const int y1 = std::min(g.h_in, oy * g.s_h - g.pad_h + g.k_h);
                for (int ox = 0; ox < g.w_out; ++ox) {
                    const int x0 = std::max(0, ox * g.s_w - g.pad_w);
                    const int x1 = std::min(g.w_in, ox * g.s_w - g.pad_w + g.k_w);
                    float acc = 0.0f;
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) acc += iplane[int64_t(y) * g.w_in + x];
                    const int count = std::max(1, (y1 - y0) * (x1 - x0));
                    oplane[int64_t(oy) * g.w_out + ox] = acc / float(count);
                }
            }
        }
    }
}

void avg_pool_backward(const PoolGeom& g, const float* dout, float* din) {
    const int64_t work = int64_t(g.batch) * g.ch * g.h_in * g.w_in;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelWork)
    for (int b = 0; b < g.batch; ++b) {
        for (int c = 0; c < g.ch; ++c) {
            const float* oplane = dout + idx4(b, c, 0, 0, g.ch, g.h_out, g.w_out);
            float* dplane = din + idx4(b, c, 0, 0, g.ch, g.h_in, g.w_in);
            for (int iy = 0; iy < g.h_in; ++iy) {
                // windows whose vertical span covers iy
                const int oy_lo = std::max(0, (iy + g.pad_h - g.k_h) / g.s_h + 1);
                const int oy_hi = std::min(g.h_out - 1, (iy + g.pad_h) / g.s_h);
                for (int ix = 0; ix < g.w_in; ++ix) {
                    const int ox_lo = std::max(0, (ix + g.pad_w - g.k_w) / g.s_w + 1);
                    const int ox_hi = std::min(g.w_out - 1, (ix + g.pad_w) / g.s_w);
                    float acc = 0.0f;
                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                        const int y0 = std::max(0, oy * g.s_h - g.pad_h);
                        const int y1 = std::min(g.h_in, oy * g.s_h - g.pad_h + g.k_h);
                        if (iy < y0 || iy >= y1) continue;
                        for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                            const int x0 = std::max(0, ox * g.s_w - g.pad_w);
                            const int x1 = std::min(g.w_in, ox * g.s_w - g.pad_w + g.k_w);
                            if (ix < x0 || ix >= x1) continue;
                            const int count = std::max(1, (y1 - y0) * (x1 - x0));
                            acc += oplane[int64_t(oy) * g.w_out + ox] / float(count);
                        }
                    }
                    dplane[int64_t(iy) * g.w_in + ix] += acc;
                }
            }
        }
    }
}

void max_pool_forward(const PoolGeom& g, const float* in, float* out, int32_t* argmax) {
    const int64_t work = int64_t(g.batch) * g.ch * g.h_out * g.w_out * g.k_h * g.k_w;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelWork)
    for (int b = 0; b < g.batch; ++b) {
        for (int c = 0; c < g.ch; ++c) {
            const float* iplane = in + idx4(b, c, 0, 0, g.ch, g.h_in, g.w_in);
            float* oplane = out + idx4(b, c, 0, 0, g.ch, g.h_out, g.w_out);
            int32_t* aplane = argmax + idx4(b, c, 0, 0, g.ch, g.h_out, g.w_out);
            for (int oy = 0; oy < g.h_out; ++oy) {
                const int y0 = std::max(0, oy * g.s_h - g.pad_h);
                const int y1 = std::min(g.h_in, oy * g.s_h - g.pad_h + g.k_h);
                for (int ox = 0; ox < g.w_out; ++ox) {
                    const int x0 = std::max(0, ox * g.s_w - g.pad_w);
                    const int x1 = std::min(g.w_in, ox * g.s_w - g.pad_w + g.k_w);
                    float best = -HUGE_VALF;
                    int32_t arg = y0 * g.w_in + x0;
                    for (int y = y0; y < y1; ++y) {
                        for (int x = x0; x < x1; ++x) {
                            const float v = iplane[int64_t(y) * g.w_in + x];
                            if (v > best) {  // strict: first max in scan order wins
                                best = v;
                                arg = y * g.w_in + x;
                            }
                        }
                    }
                    oplane[int64_t(oy) * g.w_out + ox] = best;
                    aplane[int64_t(oy) * g.w_out + ox] = arg;
                }
            }
        }
    }
}

void max_pool_backward(const PoolGeom& g, const float* dout, const int32_t* argmax,
                       float* din) {
    const int64_t work = int64_t(g.batch) * g.ch * g.h_out * g.w_out;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelWork)
    for (int b = 0; b < g.batch; ++b) {
        for (int c = 0; c < g.ch; ++c) {
            const float* oplane = dout + idx4(b, c, 0, 0, g.ch, g.h_out, g.w_out);
            const int32_t* aplane = argmax + idx4(b, c, 0, 0, g.ch, g.h_out, g.w_out);
            float* dplane = din + idx4(b, c, 0, 0, g.ch, g.h_in, g.w_in);
            for (int64_t i = 0; i < int64_t(g.h_out) * g.w_out; ++i)
                dplane[aplane[i]] += oplane[i];
        }
    }
}

namespace {

struct Lerp {
    int lo, hi;
    float w;  // weight of hi
};

inline Lerp source_lerp(int o, int out_extent, int in_extent) {
    const double s = (double(o) + 0.5) * double(in_extent) / double(out_extent) - 0.5;
    const double c = std::min(std::max(s, 0.0), double(in_extent - 1));
    const int lo = int(c);
    const int hi = std::min(lo + 1, in_extent - 1);
    return {lo, hi, float(c - lo)};
}

}  // namespace

void bilinear_forward(const ResizeGeom& g, const float* in, float* out) {
    std::vector<Lerp> ys(g.h_out), xs(g.w_out);
    for (int oy = 0; oy < g.h_out; ++oy) ys[oy] = source_lerp(oy, g.h_out, g.h_in);
    for (int ox = 0; ox < g.w_out; ++ox) xs[ox] = source_lerp(ox, g.w_out, g.w_in);

    const int64_t work = int64_t(g.batch) * g.ch * g.h_out * g.w_out;
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelWork)
    for (int b = 0; b < g.batch; ++b) {
        for (int c = 0; c < g.ch; ++c) {
            const float* iplane = in + idx4(b, c, 0, 0, g.ch, g.h_in, g.w_in);
            float* oplane = out + idx4(b, c, 0, 0, g.ch, g.h_out, g.w_out);
            for (int oy = 0; oy < g.h_out; ++oy) {
                const Lerp& ly = ys[oy];
                const float* r0 = iplane + int64_t(ly.lo) * g.w_in;
                const float* r1 = iplane + int64_t(ly.hi) * g.w_in;
                for (int ox = 0; ox < g.w_out; ++ox) {
                    const Lerp& lx = xs[ox];
                    const float top = r0[lx.lo] + lx.w * (r0[lx.hi] - r0[lx.lo]);
                    const float bot = r1[lx.lo] + lx.w * (r1[lx.hi] - r1[lx.lo]);
                    oplane[int64_t(oy) * g.w_out + ox] = top + ly.w * (bot - top);
                }
            }
        }
    }
}

void bilinear_backward(const ResizeGeom& g, const float* dout, float* din) {
    std::vector<Lerp> ys(g.h_out), xs(g.w_out);
    for (int oy = 0; oy < g.h_out; ++oy) ys[oy] = source_lerp(oy, g.h_out, g.h_in);
    for (int ox = 0; ox < g.w_out; ++ox) xs[ox] = source_lerp(ox, g.w_out, g.w_in);

    const int64_t work = int64_t(g.batch) * g.ch * g.h_out * g.w_out;
    // Scatter within one (b, c) plane stays serial; planes are independent.
#pragma omp parallel for collapse(2) schedule(static) if (work > kParallelWork)
    for (int b = 0; b < g.batch; ++b) {
        for (int c = 0; c < g.ch; ++c) {
            const float* oplane = dout + idx4(b, c, 0, 0, g.ch, g.h_out, g.w_out);
            float* dplane = din + idx4(b, c, 0, 0, g.ch, g.h_in, g.w_in);
            for (int oy = 0; oy < g.h_out; ++oy) {
                const Lerp& ly = ys[oy];
                for (int ox = 0; ox < g.w_out; ++ox) {
                    const Lerp& lx = xs[ox];
                    const float gv = oplane[int64_t(oy) * g.w_out + ox];
                    dplane[int64_t(ly.lo) * g.w_in + lx.lo] += gv * (1 - ly.w) * (1 - lx.w);
                    dplane[int64_t(ly.lo) * g.w_in + lx.hi] += gv * (1 - ly.w) * lx.w;
                    dplane[int64_t(ly.hi) * g.w_in + lx.lo] += gv * ly.w * (1 - lx.w);
                    dplane[int64_t(ly.hi) * g.w_in + lx.hi] += gv * ly.w * lx.w;
                }
            }
        }
    }
}

void bn_stats(int batch, int ch, int h, int w, const float* in, float* mean, float* var) {
    const int64_t plane = int64_t(h) * w;
    const int64_t n = int64_t(batch) * plane;
#pragma omp parallel for schedule(static) if (int64_t(ch) * n > kParallelWork)
    for (int c = 0; c < ch; ++c) {
        double s = 0.0, s2 = 0.0;
        for (int b = 0; b < batch; ++b) {
            const float* p = in + idx4(b, c, 0, 0, ch, h, w);
            for (int64_t i = 0; i < plane; ++i) {
                s += p[i];
                s2 += double(p[i]) * p[i];
            }
        }
        const double m = s / double(n);
        mean[c] = float(m);
        var[c] = float(std::max(0.0, s2 / double(n) - m * m));
    }
}

void bn_normalize(int batch, int ch, int h, int w, const float* in, const float* mean,
                  const float* var, const float* gamma, const float* beta, float eps,
                  float* out) {
    const int64_t plane = int64_t(h) * w;
#pragma omp parallel for collapse(2) schedule(static) if (int64_t(batch) * ch * plane > kParallelWork)
    for (int b = 0; b < batch; ++b) {
        for (int c = 0; c < ch; ++c) {
            const float inv = 1.0f / std::sqrt(var[c] + eps);
            const float a = gamma[c] * inv;
            const float bb = beta[c] - a * mean[c];
            const float* p = in + idx4(b, c, 0, 0, ch, h, w);
            float* q = out + idx4(b, c, 0, 0, ch, h, w);
            for (int64_t i = 0; i < plane; ++i) q[i] = a * p[i] + bb;
        }
    }
}

void bn_backward_train(int batch, int ch, int h, int w, const float* in, const float* mean,
                       const float* var, const float* gamma, float eps, const float* dout,
                       float* din, float* dgamma, float* dbeta) {
    const int64_t plane = int64_t(h) * w;
    const int64_t n = int64_t(batch) * plane;
#pragma omp parallel for schedule(static) if (int64_t(ch) * n > kParallelWork)
    for (int c = 0; c < ch; ++c) {
        const float inv = 1.0f / std::sqrt(var[c] + eps);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int b = 0; b < batch; ++b) {
            const float* px = in + idx4(b, c, 0, 0, ch, h, w);
            const float* pd = dout + idx4(b, c, 0, 0, ch, h, w);
            for (int64_t i = 0; i < plane; ++i) {
                const float xhat = (px[i] - mean[c]) * inv;
                sum_dy += pd[i];
                sum_dy_xhat += double(pd[i]) * xhat;
            }
        }
        dbeta[c] += float(sum_dy);
        dgamma[c] += float(sum_dy_xhat);
        const float mdy = float(sum_dy / double(n));
        const float mdyx = float(sum_dy_xhat / double(n));
        for (int b = 0; b < batch; ++b) {
            const float* px = in + idx4(b, c, 0, 0, ch, h, w);
            const float* pd = dout + idx4(b, c, 0, 0, ch, h, w);
            float* pi = din + idx4(b, c, 0, 0, ch, h, w);
            for (int64_t i = 0; i < plane; ++i) {
                const float xhat = (px[i] - mean[c]) * inv;
                pi[i] += gamma[c] * inv * (pd[i] - mdy - xhat * mdyx);
            }
        }
    }
}

void bn_backward_eval(int batch, int ch, int h, int w, const float* in, const float* mean,
                      const float* var, const float* gamma, float eps, const float* dout,
                      float* din, float* dgamma, float* dbeta) {
    const int64_t plane = int64_t(h) * w;
#pragma omp parallel for schedule(static) if (int64_t(ch) * batch * plane > kParallelWork)
    for (int c = 0; c < ch; ++c) {
        const float inv = 1.0f / std::sqrt(var[c] + eps);
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int b = 0; b < batch; ++b) {
            const float* px = in + idx4(b, c, 0, 0, ch, h, w);
            const float* pd = dout + idx4(b, c, 0, 0, ch, h, w);
            float* pi = din + idx4(b, c, 0, 0, ch, h, w);
            for (int64_t i = 0; i < plane; ++i) {
                sum_dy += pd[i];
                sum_dy_xhat += double(pd[i]) * (px[i] - mean[c]) * inv;
                pi[i] += pd[i] * gamma[c] * inv;
            }
        }
        dbeta[c] += float(sum_dy);
        dgamma[c] += float(sum_dy_xhat);
    }
}

double softmax_ce_forward(int batch, int classes, int h, int w, const float* logits,
                          const int32_t* labels, int ignore, int64_t* counted) {
    const int64_t rows = int64_t(batch) * h;
    std::vector<double> row_loss(rows, 0.0);
    std::vector<int64_t> row_count(rows, 0);
    const int64_t plane = int64_t(h) * w;

#pragma omp parallel for schedule(static) if (rows * w * classes > kParallelWork)
    for (int64_t r = 0; r < rows; ++r) {
        const int b = int(r / h);
        const int y = int(r % h);
        double acc = 0.0;
        int64_t cnt = 0;
        for (int x = 0; x < w; ++x) {
            const int32_t lab = labels[(int64_t(b) * h + y) * w + x];
            if (lab == ignore) continue;
            const float* px = logits + (int64_t(b) * classes) * plane + int64_t(y) * w + x;
            float m = px[0];
            for (int c = 1; c < classes; ++c) m = std::max(m, px[int64_t(c) * plane]);
            double lse = 0.0;
            for (int c = 0; c < classes; ++c) lse += std::exp(double(px[int64_t(c) * plane] - m));
            acc += double(m) + std::log(lse) - double(px[int64_t(lab) * plane]);
            ++cnt;
        }
        row_loss[r] = acc;
        row_count[r] = cnt;
    }
    double total = 0.0;
    int64_t cnt = 0;
    for (int64_t r = 0; r < rows; ++r) {
        total += row_loss[r];
        cnt += row_count[r];
    }
    *counted = cnt;
    return total;
}

void softmax_ce_backward(int batch, int classes, int h, int w, const float* logits,
                         const int32_t* labels, int ignore, float upstream_over_count,
                         float* dlogits) {
    const int64_t rows = int64_t(batch) * h;
    const int64_t plane = int64_t(h) * w;
#pragma omp parallel for schedule(static) if (rows * w * classes > kParallelWork)
    for (int64_t r = 0; r < rows; ++r) {
        const int b = int(r / h);
        const int y = int(r % h);
        for (int x = 0; x < w; ++x) {
            const int32_t lab = labels[(int64_t(b) * h + y) * w + x];
            if (lab == ignore) continue;
            const float* px = logits + (int64_t(b) * classes) * plane + int64_t(y) * w + x;
            float* pd = dlogits + (int64_t(b) * classes) * plane + int64_t(y) * w + x;
            float m = px[0];
            for (int c = 1; c < classes; ++c) m = std::max(m, px[int64_t(c) * plane]);
            double lse = 0.0;
            for (int c = 0; c < classes; ++c) lse += std::exp(double(px[int64_t(c) * plane] - m));
            for (int c = 0; c < classes; ++c) {
                const float p = float(std::exp(double(px[int64_t(c) * plane] - m)) / lse);
                pd[int64_t(c) * plane] +=
                    upstream_over_count * (p - (c == lab ? 1.0f : 0.0f));
            }
        }
    }
}

void relu_forward(int64_t n, const float* in, float* out) {
#pragma omp parallel for schedule(static) if (n > kParallelWork)
    for (int64_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : 0.0f;
}

void relu_backward(int64_t n, const float* in, const float* dout, float* din) {
#pragma omp parallel for schedule(static) if (n > kParallelWork)
    for (int64_t i = 0; i < n; ++i)
        if (in[i] > 0.0f) din[i] += dout[i];
}

void add_forward(int64_t n, const float* a, const float* b, float* out) {
#pragma omp parallel for schedule(static) if (n > kParallelWork)
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_forward(int64_t n, const float* a, const float* b, float* out) {
#pragma omp parallel for schedule(static) if (n > kParallelWork)
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy(int64_t n, float alpha, const float* x, float* y) {
#pragma omp parallel for schedule(static) if (n > kParallelWork)
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double sum_all(int64_t n, const float* x) {
    // fixed 4096-element blocks summed serially, block sums reduced in order
    const int64_t kBlock = 4096;
    const int64_t blocks = (n + kBlock - 1) / kBlock;
    std::vector<double> partial(blocks, 0.0);
#pragma omp parallel for schedule(static) if (n > kParallelWork)
    for (int64_t bi = 0; bi < blocks; ++bi) {
        double acc = 0.0;
        const int64_t end = std::min(n, (bi + 1) * kBlock);
        for (int64_t i = bi * kBlock; i < end; ++i) acc += x[i];
        partial[bi] = acc;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

}  // namespace cas::kernels
