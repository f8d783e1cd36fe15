#include "oto/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "kernels.hpp"
#include "oto/rng.hpp"

namespace oto {

namespace {

void check_finite(const std::string& id, const tensor& t) {
    for (float v : t.data)
        if (!std::isfinite(v))
            fail(errc::numeric, "non-finite value in output of vertex '" + id + "'");
}

int64_t spatial(const shape_t& s) { return s.size() == 4 ? s[2] * s[3] : 1; }

} // namespace

forward_cache forward(const graph& g, param_store& ps,
                      const std::map<std::string, tensor>& inputs, run_mode mode,
                      bool record_patterns) {
    forward_cache cache;
    cache.mode = mode;
    cache.record_patterns = record_patterns;
    for (const std::string& id : g.topological_order()) {
        const vertex& v = g.at(id);
        std::vector<const tensor*> in;
        for (const std::string& p : g.producers(id)) in.push_back(&cache.at.at(p).out);
        vertex_cache vc;
        switch (v.kind) {
            case op_kind::input: {
                auto it = inputs.find(id);
                if (it == inputs.end())
                    fail(errc::validity, "no tensor supplied for input '" + id + "'");
                vc.out = it->second;
                break;
            }
            case op_kind::output:
                vc.out = *in.at(0);
                break;
            case op_kind::conv2d: {
                auto [kh, kw] = v.attr_pair("kernel");
                auto [sh, sw] = v.attr_pair("stride");
                int64_t ph = 0, pw = 0;
                if (v.has_attr("padding")) std::tie(ph, pw) = v.attr_pair("padding");
                const tensor& x = *in.at(0);
                if (x.shape.size() != 4 || x.shape[1] != v.attr_int("in_channels"))
                    fail(errc::shape, "vertex '" + id + "': bad conv input " +
                                          shape_str(x.shape));
                auto geom = kern::make_conv_geom(x.shape, v.attr_int("out_channels"), kh, kw,
                                                 sh, sw, ph, pw);
                vc.out = tensor({geom.n, geom.oc, geom.oh, geom.ow});
                const float* b = v.params.size() > 1 ? ps.data(v.params[1]) : nullptr;
                kern::conv2d_fwd(geom, x.data.data(), ps.data(v.params[0]), b,
                                 vc.out.data.data());
                break;
            }
            case op_kind::linear: {
                const tensor& x = *in.at(0);
                if (x.shape.size() != 2 || x.shape[1] != v.attr_int("in_features"))
                    fail(errc::shape, "vertex '" + id + "': bad linear input " +
                                          shape_str(x.shape));
                const int64_t out_f = v.attr_int("out_features");
                vc.out = tensor({x.shape[0], out_f});
                const float* b = v.params.size() > 1 ? ps.data(v.params[1]) : nullptr;
                kern::linear_fwd(x.shape[0], x.shape[1], out_f, x.data.data(),
                                 ps.data(v.params[0]), b, vc.out.data.data());
                break;
            }
            case op_kind::batchnorm2d: {
                const tensor& x = *in.at(0);
                if (x.shape.size() != 4 || x.shape[1] != v.attr_int("channels"))
                    fail(errc::shape, "vertex '" + id + "': bad batchnorm input " +
                                          shape_str(x.shape));
                vc.out = tensor(x.shape);
                kern::bn_fwd(x.shape[0], x.shape[1], spatial(x.shape), x.data.data(),
                             ps.data(v.params[0]), ps.data(v.params[1]),
                             ps.data(v.params[2]), ps.data(v.params[3]),
                             mode == run_mode::train, vc.bn_mean, vc.bn_inv_std,
                             vc.out.data.data());
                break;
            }
            case op_kind::relu: {
                const tensor& x = *in.at(0);
                vc.out = tensor(x.shape);
                if (record_patterns) vc.relu_mask.resize(x.data.size());
                for (size_t i = 0; i < x.data.size(); ++i) {
                    const bool on = x.data[i] > 0.0f;
                    vc.out.data[i] = on ? x.data[i] : 0.0f;
                    if (record_patterns) vc.relu_mask[i] = on;
                }
                break;
            }
            case op_kind::maxpool2d:
            case op_kind::avgpool2d: {
                auto [kh, kw] = v.attr_pair("kernel");
                auto [sh, sw] = v.attr_pair("stride");
                int64_t ph = 0, pw = 0;
                if (v.has_attr("padding")) std::tie(ph, pw) = v.attr_pair("padding");
                const tensor& x = *in.at(0);
                if (x.shape.size() != 4)
                    fail(errc::shape, "vertex '" + id + "': pooling needs rank-4 input");
                auto geom = kern::make_pool_geom(x.shape, kh, kw, sh, sw, ph, pw);
                vc.out = tensor({geom.n, geom.c, geom.oh, geom.ow});
                if (v.kind == op_kind::maxpool2d)
                    kern::maxpool_fwd(geom, x.data.data(), vc.out.data.data(), vc.argmax);
                else
                    kern::avgpool_fwd(geom, x.data.data(), vc.out.data.data());
                break;
            }
            case op_kind::flatten: {
                const tensor& x = *in.at(0);
                vc.out.shape = {x.shape[0], shape_numel(x.shape) / x.shape[0]};
                vc.out.data = x.data;
                break;
            }
            case op_kind::add:
            case op_kind::mul: {
                if (in.size() < 2) fail(errc::shape, "vertex '" + id + "': needs >=2 operands");
                for (const tensor* t : in)
                    if (t->shape != in[0]->shape)
                        fail(errc::shape, "vertex '" + id + "': operand shapes differ");
                vc.out = tensor(in[0]->shape);
                if (v.kind == op_kind::add) {
                    for (int64_t i = 0; i < vc.out.numel(); ++i) {
                        double acc = 0.0;
                        for (const tensor* t : in) acc += t->data[i];
                        vc.out.data[i] = (float)acc;
                    }
                } else {
                    for (int64_t i = 0; i < vc.out.numel(); ++i) {
                        double acc = 1.0;
                        for (const tensor* t : in) acc *= t->data[i];
                        vc.out.data[i] = (float)acc;
                    }
                }
                break;
            }
            case op_kind::concat: {
                const int64_t axis = v.has_attr("axis") ? v.attr_int("axis") : 1;
                if (axis != 1)
                    fail(errc::shape, "vertex '" + id + "': only channel concat supported");
                shape_t out = in.at(0)->shape;
                for (size_t i = 1; i < in.size(); ++i) out[1] += in[i]->shape[1];
                vc.out = tensor(out);
                const int64_t hw = spatial(out);
                int64_t off = 0;
                for (const tensor* t : in) {
                    const int64_t tc = t->shape[1];
                    for (int64_t n = 0; n < out[0]; ++n)
                        std::memcpy(vc.out.data.data() + (n * out[1] + off) * hw,
                                    t->data.data() + n * tc * hw,
                                    (size_t)(tc * hw) * sizeof(float));
                    off += tc;
                }
                break;
            }
            case op_kind::unknown:
                fail(errc::validity, "cannot execute op '" + v.op_tag + "' (vertex '" + id +
                                         "'): unknown operator");
        }
        check_finite(id, vc.out);
        cache.at.emplace(id, std::move(vc));
    }
    return cache;
}

std::vector<float> backward(const graph& g, const param_store& ps,
                            const forward_cache& cache,
                            const std::map<std::string, tensor>& loss_grads) {
    std::vector<float> pgrad(ps.arena().size(), 0.0f);
    std::map<std::string, tensor> agrad; // activation grads, accumulated over fan-out

    auto grad_of = [&](const std::string& id) -> tensor* {
        auto it = agrad.find(id);
        return it == agrad.end() ? nullptr : &it->second;
    };
    auto accum_into = [&](const std::string& id, const shape_t& shape) -> tensor& {
        auto it = agrad.find(id);
        if (it == agrad.end()) it = agrad.emplace(id, tensor(shape)).first;
        return it->second;
    };

    for (const auto& [oid, lg] : loss_grads) {
        const vertex& ov = g.at(oid);
        if (ov.kind != op_kind::output)
            fail(errc::validity, "loss grad keyed by non-output vertex '" + oid + "'");
        if (lg.shape != cache.at.at(oid).out.shape)
            fail(errc::shape, "loss grad shape mismatch at '" + oid + "'");
        tensor& t = accum_into(oid, lg.shape);
        for (int64_t i = 0; i < t.numel(); ++i) t.data[i] += lg.data[i];
    }

    std::vector<std::string> order = g.topological_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const std::string& id = *it;
        const vertex& v = g.at(id);
        tensor* dy = grad_of(id);
        if (!dy) continue; // not on any path to a seeded output
        const vertex_cache& vc = cache.at.at(id);
        std::vector<std::string> prods = g.producers(id);
        switch (v.kind) {
            case op_kind::input:
                break;
            case op_kind::output: {
                tensor& dx = accum_into(prods.at(0), dy->shape);
                for (int64_t i = 0; i < dx.numel(); ++i) dx.data[i] += dy->data[i];
                break;
            }
            case op_kind::conv2d: {
                const tensor& x = cache.at.at(prods.at(0)).out;
                auto [kh, kw] = v.attr_pair("kernel");
                auto [sh, sw] = v.attr_pair("stride");
                int64_t ph = 0, pw = 0;
                if (v.has_attr("padding")) std::tie(ph, pw) = v.attr_pair("padding");
                auto geom = kern::make_conv_geom(x.shape, v.attr_int("out_channels"), kh, kw,
                                                 sh, sw, ph, pw);
                tensor& dx = accum_into(prods.at(0), x.shape);
                float* dw = pgrad.data() + ps.info(v.params[0]).offset;
                std::vector<float> db_scratch;
                float* db;
                if (v.params.size() > 1)
                    db = pgrad.data() + ps.info(v.params[1]).offset;
                else {
                    db_scratch.assign(geom.oc, 0.0f);
                    db = db_scratch.data();
                }
                kern::conv2d_bwd(geom, x.data.data(), ps.data(v.params[0]), dy->data.data(),
                                 dx.data.data(), dw, db);
                break;
            }
            case op_kind::linear: {
                const tensor& x = cache.at.at(prods.at(0)).out;
                tensor& dx = accum_into(prods.at(0), x.shape);
                float* dw = pgrad.data() + ps.info(v.params[0]).offset;
                std::vector<float> db_scratch;
                float* db;
                if (v.params.size() > 1)
                    db = pgrad.data() + ps.info(v.params[1]).offset;
                else {
                    db_scratch.assign(v.attr_int("out_features"), 0.0f);
                    db = db_scratch.data();
                }
                kern::linear_bwd(x.shape[0], x.shape[1], v.attr_int("out_features"),
                                 x.data.data(), ps.data(v.params[0]), dy->data.data(),
                                 dx.data.data(), dw, db);
                break;
            }
            case op_kind::batchnorm2d: {
                const tensor& x = cache.at.at(prods.at(0)).out;
                tensor& dx = accum_into(prods.at(0), x.shape);
                kern::bn_bwd(x.shape[0], x.shape[1], spatial(x.shape), x.data.data(),
                             ps.data(v.params[0]), vc.bn_mean, vc.bn_inv_std,
                             dy->data.data(), cache.mode == run_mode::train,
                             dx.data.data(), pgrad.data() + ps.info(v.params[0]).offset,
                             pgrad.data() + ps.info(v.params[1]).offset);
                break;
            }
            case op_kind::relu: {
                const tensor& x = cache.at.at(prods.at(0)).out;
                tensor& dx = accum_into(prods.at(0), x.shape);
                // derivative at exactly 0 is 0
                for (int64_t i = 0; i < dx.numel(); ++i)
                    if (x.data[i] > 0.0f) dx.data[i] += dy->data[i];
                break;
            }
            case op_kind::maxpool2d: {
                const tensor& x = cache.at.at(prods.at(0)).out;
                auto [kh, kw] = v.attr_pair("kernel");
                auto [sh, sw] = v.attr_pair("stride");
                int64_t ph = 0, pw = 0;
                if (v.has_attr("padding")) std::tie(ph, pw) = v.attr_pair("padding");
                auto geom = kern::make_pool_geom(x.shape, kh, kw, sh, sw, ph, pw);
                tensor& dx = accum_into(prods.at(0), x.shape);
                kern::maxpool_bwd(geom, vc.argmax, dy->data.data(), dx.data.data());
                break;
            }
            case op_kind::avgpool2d: {
                const tensor& x = cache.at.at(prods.at(0)).out;
                auto [kh, kw] = v.attr_pair("kernel");
                auto [sh, sw] = v.attr_pair("stride");
                int64_t ph = 0, pw = 0;
                if (v.has_attr("padding")) std::tie(ph, pw) = v.attr_pair("padding");
                auto geom = kern::make_pool_geom(x.shape, kh, kw, sh, sw, ph, pw);
                tensor& dx = accum_into(prods.at(0), x.shape);
                kern::avgpool_bwd(geom, dy->data.data(), dx.data.data());
                break;
            }
            case op_kind::flatten: {
                const tensor& x = cache.at.at(prods.at(0)).out;
                tensor& dx = accum_into(prods.at(0), x.shape);
                for (int64_t i = 0; i < dx.numel(); ++i) dx.data[i] += dy->data[i];
                break;
            }
            case op_kind::add: {
                for (const std::string& p : prods) {
                    tensor& dx = accum_into(p, dy->shape);
                    for (int64_t i = 0; i < dx.numel(); ++i) dx.data[i] += dy->data[i];
                }
                break;
            }
            case op_kind::mul: {
                for (size_t pi = 0; pi < prods.size(); ++pi) {
                    tensor& dx = accum_into(prods[pi], dy->shape);
                    for (int64_t i = 0; i < dx.numel(); ++i) {
                        double prod = dy->data[i];
                        for (size_t pj = 0; pj < prods.size(); ++pj)
                            if (pj != pi) prod *= cache.at.at(prods[pj]).out.data[i];
                        dx.data[i] += (float)prod;
                    }
                }
                break;
            }
            case op_kind::concat: {
                const int64_t hw = spatial(dy->shape);
                const int64_t out_c = dy->shape[1];
                const int64_t n = dy->shape[0];
                int64_t off = 0;
                for (const std::string& p : prods) {
                    const tensor& x = cache.at.at(p).out;
                    tensor& dx = accum_into(p, x.shape);
                    const int64_t tc = x.shape[1];
                    for (int64_t b = 0; b < n; ++b)
                        for (int64_t i = 0; i < tc * hw; ++i)
                            dx.data[b * tc * hw + i] +=
                                dy->data[(b * out_c + off) * hw + i];
                    off += tc;
                }
                break;
            }
            case op_kind::unknown:
                fail(errc::validity, "cannot differentiate unknown op at vertex '" + id + "'");
        }
    }
    return pgrad;
}

ce_result softmax_cross_entropy(const tensor& logits, const std::vector<int>& labels) {
    if (logits.shape.size() != 2 || (int64_t)labels.size() != logits.shape[0])
        fail(errc::shape, "cross entropy: logits must be (N,C) with one label per row");
    const int64_t n = logits.shape[0], c = logits.shape[1];
    ce_result r;
    r.grad = tensor(logits.shape);
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const float* row = logits.data.data() + i * c;
        double mx = row[0];
        for (int64_t k = 1; k < c; ++k) mx = std::max(mx, (double)row[k]);
        double se = 0.0;
        for (int64_t k = 0; k < c; ++k) se += std::exp((double)row[k] - mx);
        const double lse = mx + std::log(se);
        const int y = labels[i];
        if (y < 0 || y >= c) fail(errc::config, "label out of range");
        total += lse - row[y];
        for (int64_t k = 0; k < c; ++k) {
            const double p = std::exp((double)row[k] - lse);
            r.grad.data[i * c + k] = (float)((p - (k == y ? 1.0 : 0.0)) / (double)n);
        }
    }
    r.loss = total / (double)n;
    return r;
}

int64_t argmax_row(const tensor& logits, int64_t row) {
    const int64_t c = logits.shape[1];
    const float* p = logits.data.data() + row * c;
    int64_t best = 0;
    for (int64_t k = 1; k < c; ++k)
        if (p[k] > p[best]) best = k;
    return best;
}

namespace {

bool same_patterns(const forward_cache& a, const forward_cache& b) {
    for (const auto& [id, vca] : a.at) {
        const vertex_cache& vcb = b.at.at(id);
        if (vca.relu_mask != vcb.relu_mask) return false;
        if (vca.argmax != vcb.argmax) return false;
    }
    return true;
}

} // namespace

finite_diff_report finite_diff_check(const graph& g, const param_store& ps,
                                     const std::map<std::string, tensor>& inputs,
                                     double eps, int samples, uint64_t seed) {
    rng r(seed);

    // fixed random projection of all outputs makes the loss scalar and smooth
    param_store base = ps;
    forward_cache cache = forward(g, base, inputs, run_mode::train, true);
    std::map<std::string, tensor> w;
    double base_loss = 0.0;
    for (const std::string& oid : g.outputs) {
        const tensor& out = cache.at.at(oid).out;
        tensor t(out.shape);
        for (int64_t i = 0; i < t.numel(); ++i) t.data[i] = (float)r.uniform(-1.0, 1.0);
        for (int64_t i = 0; i < t.numel(); ++i)
            base_loss += (double)t.data[i] * (double)out.data[i];
        w[oid] = std::move(t);
    }
    (void)base_loss;

    std::vector<float> analytic = backward(g, ps, cache, w);

    // candidate coordinates: all trainable scalars, shuffled
    std::vector<int64_t> coords;
    for (const std::string& name : trainable_names(g)) {
        const auto& e = ps.info(name);
        for (int64_t i = 0; i < e.size; ++i) coords.push_back(e.offset + i);
    }
    r.shuffle(coords);

    auto loss_at = [&](param_store& p) {
        forward_cache c = forward(g, p, inputs, run_mode::train, true);
        double loss = 0.0;
        for (const auto& [oid, wt] : w) {
            const tensor& out = c.at.at(oid).out;
            for (int64_t i = 0; i < wt.numel(); ++i)
                loss += (double)wt.data[i] * (double)out.data[i];
        }
        return std::make_pair(loss, std::move(c));
    };

    finite_diff_report rep;
    for (int64_t idx : coords) {
        if (rep.checked >= samples) break;
        param_store plus = ps, minus = ps;
        plus.arena()[idx] += (float)eps;
        minus.arena()[idx] -= (float)eps;
        auto [lp, cp] = loss_at(plus);
        auto [lm, cm] = loss_at(minus);
        if (!same_patterns(cp, cm)) { // a kink moved between -eps and +eps
            rep.skipped++;
            continue;
        }
        const double numeric = (lp - lm) / (2.0 * eps);
        const double a = analytic[idx];
        const double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
        rep.checked++;
    }
    return rep;
}

std::vector<uint8_t> dump_activations(const forward_cache& cache) {
    param_store ps;
    for (const auto& [id, vc] : cache.at) ps.add(id, vc.out.shape, vc.out.data.data());
    return write_blob(ps);
}

} // namespace oto
