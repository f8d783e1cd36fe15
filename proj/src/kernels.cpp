#include "kernels.hpp"

#include <cmath>
#include <limits>

#include "oto/error.hpp"

namespace oto::kern {

conv_geom make_conv_geom(const shape_t& x, int64_t oc, int64_t kh, int64_t kw, int64_t sh,
                         int64_t sw, int64_t ph, int64_t pw) {
    conv_geom g;
    g.n = x[0];
    g.ic = x[1];
    g.ih = x[2];
    g.iw = x[3];
    g.oc = oc;
    g.kh = kh;
    g.kw = kw;
    g.sh = sh;
    g.sw = sw;
    g.ph = ph;
    g.pw = pw;
    g.oh = (g.ih + 2 * ph - kh) / sh + 1;
    g.ow = (g.iw + 2 * pw - kw) / sw + 1;
    if (g.oh <= 0 || g.ow <= 0) fail(errc::shape, "conv: non-positive output extent");
    return g;
}

void conv2d_fwd(const conv_geom& g, const float* x, const float* w, const float* b, float* y) {
    const int64_t in_im = g.ic * g.ih * g.iw;
    const int64_t w_oc = g.ic * g.kh * g.kw;
    int64_t yi = 0;
    for (int64_t n = 0; n < g.n; ++n) {
        const float* xn = x + n * in_im;
        for (int64_t oc = 0; oc < g.oc; ++oc) {
            const float* woc = w + oc * w_oc;
            const double bias = b ? (double)b[oc] : 0.0;
            for (int64_t oh = 0; oh < g.oh; ++oh) {
                const int64_t ih0 = oh * g.sh - g.ph;
                for (int64_t ow = 0; ow < g.ow; ++ow, ++yi) {
                    const int64_t iw0 = ow * g.sw - g.pw;
                    double acc = bias;
                    for (int64_t ic = 0; ic < g.ic; ++ic) {
                        const float* xc = xn + ic * g.ih * g.iw;
                        const float* wc = woc + ic * g.kh * g.kw;
                        for (int64_t kh = 0; kh < g.kh; ++kh) {
                            const int64_t ih = ih0 + kh;
                            if (ih < 0 || ih >= g.ih) continue;
                            const float* xr = xc + ih * g.iw;
                            const float* wr = wc + kh * g.kw;
                            for (int64_t kw = 0; kw < g.kw; ++kw) {
                                const int64_t iw = iw0 + kw;
                                if (iw < 0 || iw >= g.iw) continue;
                                acc += (double)xr[iw] * (double)wr[kw];
                            }
                        }
                    }
                    y[yi] = (float)acc;
                }
            }
        }
    }
}

void conv2d_bwd(const conv_geom& g, const float* x, const float* w, const float* dy,
                float* dx, float* dw, float* db) {
    const int64_t in_im = g.ic * g.ih * g.iw;
    const int64_t w_oc = g.ic * g.kh * g.kw;
    std::vector<double> dxd(g.n * in_im, 0.0);
    std::vector<double> dwd(g.oc * w_oc, 0.0);
    std::vector<double> dbd(g.oc, 0.0);
    int64_t yi = 0;
    for (int64_t n = 0; n < g.n; ++n) {
        const float* xn = x + n * in_im;
        double* dxn = dxd.data() + n * in_im;
        for (int64_t oc = 0; oc < g.oc; ++oc) {
            const float* woc = w + oc * w_oc;
            double* dwoc = dwd.data() + oc * w_oc;
            for (int64_t oh = 0; oh < g.oh; ++oh) {
                const int64_t ih0 = oh * g.sh - g.ph;
                for (int64_t ow = 0; ow < g.ow; ++ow, ++yi) {
                    const int64_t iw0 = ow * g.sw - g.pw;
                    const double gy = dy[yi];
                    if (gy == 0.0) continue;
                    dbd[oc] += gy;
                    for (int64_t ic = 0; ic < g.ic; ++ic) {
                        const float* xc = xn + ic * g.ih * g.iw;
                        double* dxc = dxn + ic * g.ih * g.iw;
                        const float* wc = woc + ic * g.kh * g.kw;
                        double* dwc = dwoc + ic * g.kh * g.kw;
                        for (int64_t kh = 0; kh < g.kh; ++kh) {
                            const int64_t ih = ih0 + kh;
                            if (ih < 0 || ih >= g.ih) continue;
                            for (int64_t kw = 0; kw < g.kw; ++kw) {
                                const int64_t iw = iw0 + kw;
                                if (iw < 0 || iw >= g.iw) continue;
                                dxc[ih * g.iw + iw] += gy * (double)wc[kh * g.kw + kw];
                                dwc[kh * g.kw + kw] += gy * (double)xc[ih * g.iw + iw];
                            }
                        }
                    }
                }
            }
        }
    }
    for (size_t i = 0; i < dxd.size(); ++i) dx[i] += (float)dxd[i];
    for (size_t i = 0; i < dwd.size(); ++i) dw[i] += (float)dwd[i];
    for (int64_t i = 0; i < g.oc; ++i) db[i] += (float)dbd[i];
}

void linear_fwd(int64_t n, int64_t in, int64_t out, const float* x, const float* w,
                const float* b, float* y) {
    for (int64_t i = 0; i < n; ++i) {
        const float* xi = x + i * in;
        for (int64_t o = 0; o < out; ++o) {
            const float* wo = w + o * in;
            double acc = b ? (double)b[o] : 0.0;
            for (int64_t k = 0; k < in; ++k) acc += (double)xi[k] * (double)wo[k];
            y[i * out + o] = (float)acc;
        }
    }
}

void linear_bwd(int64_t n, int64_t in, int64_t out, const float* x, const float* w,
                const float* dy, float* dx, float* dw, float* db) {
    std::vector<double> dwd(out * in, 0.0), dbd(out, 0.0);
    for (int64_t i = 0; i < n; ++i) {
        const float* xi = x + i * in;
        const float* dyi = dy + i * out;
        float* dxi = dx + i * in;
        for (int64_t k = 0; k < in; ++k) {
            double acc = 0.0;
            for (int64_t o = 0; o < out; ++o) acc += (double)dyi[o] * (double)w[o * in + k];
            dxi[k] += (float)acc;
        }
        for (int64_t o = 0; o < out; ++o) {
            const double gy = dyi[o];
            dbd[o] += gy;
            double* dwo = dwd.data() + o * in;
            for (int64_t k = 0; k < in; ++k) dwo[k] += gy * (double)xi[k];
        }
    }
    for (int64_t i = 0; i < out * in; ++i) dw[i] += (float)dwd[i];
    for (int64_t o = 0; o < out; ++o) db[o] += (float)dbd[o];
}

void bn_fwd(int64_t n, int64_t c, int64_t hw, const float* x, const float* gamma,
            const float* beta, float* running_mean, float* running_var, bool train,
            std::vector<double>& mean, std::vector<double>& inv_std, float* y) {
    constexpr double eps = 1e-5;
    constexpr double momentum = 0.1;
    mean.assign(c, 0.0);
    inv_std.assign(c, 0.0);
    const int64_t im = c * hw;
    const double m_count = (double)(n * hw);
    for (int64_t ch = 0; ch < c; ++ch) {
        double mu, var;
        if (train) {
            double s = 0.0, s2 = 0.0;
            for (int64_t b = 0; b < n; ++b) {
                const float* p = x + b * im + ch * hw;
                for (int64_t i = 0; i < hw; ++i) {
                    const double v = p[i];
                    s += v;
                    s2 += v * v;
                }
            }
            mu = s / m_count;
            var = s2 / m_count - mu * mu;
            if (var < 0.0) var = 0.0; // guard against cancellation
            running_mean[ch] = (float)((1.0 - momentum) * running_mean[ch] + momentum * mu);
            running_var[ch] = (float)((1.0 - momentum) * running_var[ch] + momentum * var);
        } else {
            mu = running_mean[ch];
            var = running_var[ch];
        }
        mean[ch] = mu;
        inv_std[ch] = 1.0 / std::sqrt(var + eps);
        const double g = gamma[ch], bta = beta[ch], is = inv_std[ch];
        for (int64_t b = 0; b < n; ++b) {
            const float* p = x + b * im + ch * hw;
            float* q = y + b * im + ch * hw;
            for (int64_t i = 0; i < hw; ++i)
                q[i] = (float)(g * (((double)p[i] - mu) * is) + bta);
        }
    }
}

void bn_bwd(int64_t n, int64_t c, int64_t hw, const float* x, const float* gamma,
            const std::vector<double>& mean, const std::vector<double>& inv_std,
            const float* dy, bool through_stats, float* dx, float* dgamma, float* dbeta) {
    const int64_t im = c * hw;
    const double m_count = (double)(n * hw);
    for (int64_t ch = 0; ch < c; ++ch) {
        const double mu = mean[ch], is = inv_std[ch], g = gamma[ch];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int64_t b = 0; b < n; ++b) {
            const float* px = x + b * im + ch * hw;
            const float* pdy = dy + b * im + ch * hw;
            for (int64_t i = 0; i < hw; ++i) {
                const double xhat = ((double)px[i] - mu) * is;
                sum_dy += pdy[i];
                sum_dy_xhat += (double)pdy[i] * xhat;
            }
        }
        dgamma[ch] += (float)sum_dy_xhat;
        dbeta[ch] += (float)sum_dy;
        const double mean_dy = sum_dy / m_count;
        const double mean_dy_xhat = sum_dy_xhat / m_count;
        for (int64_t b = 0; b < n; ++b) {
            const float* px = x + b * im + ch * hw;
            const float* pdy = dy + b * im + ch * hw;
            float* pdx = dx + b * im + ch * hw;
            for (int64_t i = 0; i < hw; ++i) {
                if (through_stats) {
                    const double xhat = ((double)px[i] - mu) * is;
                    pdx[i] += (float)(g * is *
                                      ((double)pdy[i] - mean_dy - xhat * mean_dy_xhat));
                } else {
                    pdx[i] += (float)(g * is * (double)pdy[i]);
                }
            }
        }
    }
}

pool_geom make_pool_geom(const shape_t& x, int64_t kh, int64_t kw, int64_t sh, int64_t sw,
                         int64_t ph, int64_t pw) {
    pool_geom g;
    g.n = x[0];
    g.c = x[1];
    g.ih = x[2];
    g.iw = x[3];
    g.kh = kh;
    g.kw = kw;
    g.sh = sh;
    g.sw = sw;
    g.ph = ph;
    g.pw = pw;
    g.oh = (g.ih + 2 * ph - kh) / sh + 1;
    g.ow = (g.iw + 2 * pw - kw) / sw + 1;
    if (g.oh <= 0 || g.ow <= 0) fail(errc::shape, "pool: non-positive output extent");
    return g;
}

void maxpool_fwd(const pool_geom& g, const float* x, float* y, std::vector<int64_t>& argmax) {
    argmax.assign(g.n * g.c * g.oh * g.ow, -1);
    int64_t yi = 0;
    for (int64_t n = 0; n < g.n; ++n) {
        for (int64_t c = 0; c < g.c; ++c) {
            const float* xc = x + (n * g.c + c) * g.ih * g.iw;
            const int64_t base = (n * g.c + c) * g.ih * g.iw;
            for (int64_t oh = 0; oh < g.oh; ++oh) {
                for (int64_t ow = 0; ow < g.ow; ++ow, ++yi) {
                    float best = -std::numeric_limits<float>::infinity();
                    int64_t best_idx = -1;
                    for (int64_t kh = 0; kh < g.kh; ++kh) {
                        const int64_t ih = oh * g.sh - g.ph + kh;
                        if (ih < 0 || ih >= g.ih) continue;
                        for (int64_t kw = 0; kw < g.kw; ++kw) {
                            const int64_t iw = ow * g.sw - g.pw + kw;
                            if (iw < 0 || iw >= g.iw) continue;
                            const float v = xc[ih * g.iw + iw];
                            if (v > best) { // strict: first max in scan order wins
                                best = v;
                                best_idx = base + ih * g.iw + iw;
                            }
                        }
                    }
                    // window fully in padding can only happen with kernel-sized
                    // padding, which shape inference already rejects
                    y[yi] = best_idx < 0 ? 0.0f : best;
                    argmax[yi] = best_idx;
                }
            }
        }
    }
}

void maxpool_bwd(const pool_geom& g, const std::vector<int64_t>& argmax, const float* dy,
                 float* dx) {
    for (size_t i = 0; i < argmax.size(); ++i)
        if (argmax[i] >= 0) dx[argmax[i]] += dy[i];
}

void avgpool_fwd(const pool_geom& g, const float* x, float* y) {
    const double inv = 1.0 / (double)(g.kh * g.kw);
    int64_t yi = 0;
    for (int64_t n = 0; n < g.n; ++n) {
        for (int64_t c = 0; c < g.c; ++c) {
            const float* xc = x + (n * g.c + c) * g.ih * g.iw;
            for (int64_t oh = 0; oh < g.oh; ++oh) {
                for (int64_t ow = 0; ow < g.ow; ++ow, ++yi) {
                    double acc = 0.0;
                    for (int64_t kh = 0; kh < g.kh; ++kh) {
                        const int64_t ih = oh * g.sh - g.ph + kh;
                        if (ih < 0 || ih >= g.ih) continue;
                        for (int64_t kw = 0; kw < g.kw; ++kw) {
                            const int64_t iw = ow * g.sw - g.pw + kw;
                            if (iw < 0 || iw >= g.iw) continue;
                            acc += xc[ih * g.iw + iw];
                        }
                    }
                    y[yi] = (float)(acc * inv);
                }
            }
        }
    }
}

void avgpool_bwd(const pool_geom& g, const float* dy, float* dx) {
    const double inv = 1.0 / (double)(g.kh * g.kw);
    int64_t yi = 0;
    for (int64_t n = 0; n < g.n; ++n) {
        for (int64_t c = 0; c < g.c; ++c) {
            float* dxc = dx + (n * g.c + c) * g.ih * g.iw;
            for (int64_t oh = 0; oh < g.oh; ++oh) {
                for (int64_t ow = 0; ow < g.ow; ++ow, ++yi) {
                    const double gshare = (double)dy[yi] * inv;
                    for (int64_t kh = 0; kh < g.kh; ++kh) {
                        const int64_t ih = oh * g.sh - g.ph + kh;
                        if (ih < 0 || ih >= g.ih) continue;
                        for (int64_t kw = 0; kw < g.kw; ++kw) {
                            const int64_t iw = ow * g.sw - g.pw + kw;
                            if (iw < 0 || iw >= g.iw) continue;
                            dxc[ih * g.iw + iw] += (float)gshare;
                        }
                    }
                }
            }
        }
    }
}

} // namespace oto::kern
