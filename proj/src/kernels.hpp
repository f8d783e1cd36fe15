#pragma once

// Loop-nest kernels shared by engine.cpp. All reductions accumulate in f64
// with a fixed iteration order; backward outputs are computed in f64 scratch
// and cast to f32 once, so results are bit-stable across runs.

#include <cstdint>
#include <vector>

#include "oto/graph.hpp"

namespace oto::kern {

struct conv_geom {
    int64_t n, ic, ih, iw;
    int64_t oc, oh, ow;
    int64_t kh, kw, sh, sw, ph, pw;
};

conv_geom make_conv_geom(const shape_t& x, int64_t oc, int64_t kh, int64_t kw, int64_t sh,
                         int64_t sw, int64_t ph, int64_t pw);

void conv2d_fwd(const conv_geom& g, const float* x, const float* w, const float* b, float* y);
void conv2d_bwd(const conv_geom& g, const float* x, const float* w, const float* dy,
                float* dx, float* dw, float* db);

void linear_fwd(int64_t n, int64_t in, int64_t out, const float* x, const float* w,
                const float* b, float* y);
void linear_bwd(int64_t n, int64_t in, int64_t out, const float* x, const float* w,
                const float* dy, float* dx, float* dw, float* db);

// mean/inv_std are the statistics actually used (batch in train, running in
// eval); train mode also rewrites running_mean/running_var in place.
void bn_fwd(int64_t n, int64_t c, int64_t hw, const float* x, const float* gamma,
            const float* beta, float* running_mean, float* running_var, bool train,
            std::vector<double>& mean, std::vector<double>& inv_std, float* y);
// through_stats selects the train-mode VJP (batch statistics depend on x)
void bn_bwd(int64_t n, int64_t c, int64_t hw, const float* x, const float* gamma,
            const std::vector<double>& mean, const std::vector<double>& inv_std,
            const float* dy, bool through_stats, float* dx, float* dgamma, float* dbeta);

struct pool_geom {
    int64_t n, c, ih, iw, oh, ow;
    int64_t kh, kw, sh, sw, ph, pw;
};
pool_geom make_pool_geom(const shape_t& x, int64_t kh, int64_t kw, int64_t sh, int64_t sw,
                         int64_t ph, int64_t pw);

// argmax holds the flat input index of the first maximum in scan order
void maxpool_fwd(const pool_geom& g, const float* x, float* y, std::vector<int64_t>& argmax);
void maxpool_bwd(const pool_geom& g, const std::vector<int64_t>& argmax, const float* dy,
                 float* dx);

// divisor is always kh*kw (padding counts as zeros)
void avgpool_fwd(const pool_geom& g, const float* x, float* y);
void avgpool_bwd(const pool_geom& g, const float* dy, float* dx);

} // namespace oto::kern
