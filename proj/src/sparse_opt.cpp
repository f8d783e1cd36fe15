#include "oto/sparse_opt.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace oto {

namespace {

constexpr double kEmaDecay = 0.9;

// Per-scalar state of the configured variant. estimate() is the descent
// direction the variant would take; both the plain step and the redundant
// branch consume it, which is what makes the k=0 run coincide with the plain
// loop bit for bit.
struct variant_state {
    opt_variant kind;
    double mu, b1, b2, eps, wd;
    std::vector<double> vel, m, v;
    double c1 = 1.0, c2 = 1.0;

    variant_state(const optimizer_config& cfg, size_t n)
        : kind(cfg.variant), mu(cfg.momentum), b1(cfg.beta1), b2(cfg.beta2),
          eps(cfg.adam_eps), wd(cfg.weight_decay) {
        if (kind == opt_variant::momentum) vel.assign(n, 0.0);
        if (kind == opt_variant::adam || kind == opt_variant::adamw) {
            m.assign(n, 0.0);
            v.assign(n, 0.0);
        }
    }

    void begin_step(int64_t t) {
        if (kind == opt_variant::adam || kind == opt_variant::adamw) {
            c1 = 1.0 - std::pow(b1, (double)(t + 1));
            c2 = 1.0 - std::pow(b2, (double)(t + 1));
        }
    }

    double estimate(int64_t i, double gi, double xi) {
        switch (kind) {
        case opt_variant::sgd:
            return gi + wd * xi;
        case opt_variant::momentum: {
            const double gg = gi + wd * xi;
            vel[(size_t)i] = mu * vel[(size_t)i] + gg;
            return vel[(size_t)i];
        }
        case opt_variant::adam: {
            const double gg = gi + wd * xi;
            m[(size_t)i] = b1 * m[(size_t)i] + (1.0 - b1) * gg;
            v[(size_t)i] = b2 * v[(size_t)i] + (1.0 - b2) * gg * gg;
            return (m[(size_t)i] / c1) / (std::sqrt(v[(size_t)i] / c2) + eps);
        }
        case opt_variant::adamw: {
            m[(size_t)i] = b1 * m[(size_t)i] + (1.0 - b1) * gi;
            v[(size_t)i] = b2 * v[(size_t)i] + (1.0 - b2) * gi * gi;
            return (m[(size_t)i] / c1) / (std::sqrt(v[(size_t)i] / c2) + eps);
        }
        }
        return gi;
    }

    // x_next as a double, shared by the in-place step and the trial iterate.
    double stepped(double xi, double est, double alpha) const {
        if (kind == opt_variant::adamw) return xi - alpha * wd * xi - alpha * est;
        return xi - alpha * est;
    }

    void apply(std::vector<float>& x, int64_t i, double gi, double alpha) {
        const double xi = (double)x[(size_t)i];
        const double est = estimate(i, gi, xi);
        x[(size_t)i] = (float)stepped(xi, est, alpha);
    }
};

void validate_common(const optimizer_config& cfg) {
    if (cfg.steps <= 0) fail(errc::config, "warm-up requires >=1 step");
    if (!(cfg.lr > 0.0)) fail(errc::config, "learning rate must be > 0");
    if (cfg.schedule != "constant" && cfg.schedule != "cosine")
        fail(errc::config, "unknown lr schedule '" + cfg.schedule + "'");
    if (!(cfg.tau > 0.0)) fail(errc::config, "tau must be > 0");
    if (cfg.eps_hs < 0.0 || cfg.eps_hs >= 1.0) fail(errc::config, "eps_hs must lie in [0,1)");
    if (cfg.alpha_mix < 0.0 || cfg.alpha_mix > 1.0)
        fail(errc::config, "alpha_mix must lie in [0,1]");
}

int count_zero_zigs(const group_partition& part, const std::vector<float>& x) {
    int n = 0;
    for (const auto& vg : part.groups)
        if (vg.is_zig && group_is_zero(vg, x)) ++n;
    return n;
}

} // namespace

opt_variant variant_from_string(const std::string& s) {
    if (s == "sgd") return opt_variant::sgd;
    if (s == "momentum") return opt_variant::momentum;
    if (s == "adam") return opt_variant::adam;
    if (s == "adamw") return opt_variant::adamw;
    fail(errc::config, "unknown optimizer variant '" + s + "'");
}

const char* variant_name(opt_variant v) {
    switch (v) {
    case opt_variant::sgd: return "sgd";
    case opt_variant::momentum: return "momentum";
    case opt_variant::adam: return "adam";
    case opt_variant::adamw: return "adamw";
    }
    return "?";
}

double optimizer_config::lr_at(int64_t t) const {
    if (schedule == "cosine") {
        const double pi = 3.14159265358979323846;
        return lr * 0.5 * (1.0 + std::cos(pi * (double)t / (double)steps));
    }
    return lr;
}

int64_t resolve_target(const optimizer_config& cfg, int zig_count) {
    int64_t k = 0;
    if (cfg.target_count >= 0) {
        k = cfg.target_count;
    } else if (cfg.target_fraction >= 0.0) {
        if (cfg.target_fraction > 1.0)
            fail(errc::config, "sparsity fraction must lie in [0,1]");
        k = (int64_t)std::ceil(cfg.target_fraction * (double)zig_count);
    }
    if (k < 0 || k > zig_count)
        fail(errc::config, "sparsity target out of range: " + std::to_string(k) + " of " +
                               std::to_string(zig_count) + " groups");
    return k;
}

const salience_entry& salience_report::for_group(int id) const {
    for (const auto& e : entries)
        if (e.group == id) return e;
    fail(errc::consistency, "no salience entry for group " + std::to_string(id));
}

salience_report salience_scores(const group_partition& part, const std::vector<float>& x,
                                const std::vector<double>& grad, double tau,
                                double alpha_mix) {
    salience_report rep;
    double max_mag = 0.0;
    for (const auto& vg : part.groups) {
        if (!vg.is_zig) continue;
        double nx2 = 0.0, ng2 = 0.0, dot = 0.0;
        int64_t n = 0;
        for (const auto& [lo, hi] : vg.ranges)
            for (int64_t i = lo; i < hi; ++i) {
                const double xi = (double)x[(size_t)i];
                const double gi = grad[(size_t)i];
                nx2 += xi * xi;
                ng2 += gi * gi;
                dot += xi * gi;
                ++n;
            }
        salience_entry e;
        e.group = vg.id;
        const double xnorm = std::sqrt(nx2), gnorm = std::sqrt(ng2);
        e.cos_theta = dot / (std::max(xnorm, tau) * std::max(gnorm, tau));
        e.cos_theta = std::clamp(e.cos_theta, -1.0, 1.0);
        e.magnitude = n > 0 ? xnorm / std::sqrt((double)n) : 0.0;
        max_mag = std::max(max_mag, e.magnitude);
        rep.entries.push_back(e);
    }
    const double denom = std::max(max_mag, tau);
    for (auto& e : rep.entries)
        e.score = alpha_mix * (1.0 - e.cos_theta) / 2.0 +
                  (1.0 - alpha_mix) * (e.magnitude / denom);
    return rep;
}

classification select_redundant_flat(const group_partition& part, const salience_report& rep,
                                     int64_t k) {
    if (k < 0 || k > (int64_t)rep.entries.size()) fail(errc::config, "K out of range");
    (void)part;
    std::vector<const salience_entry*> order;
    for (const auto& e : rep.entries) order.push_back(&e);
    std::sort(order.begin(), order.end(), [](const salience_entry* a, const salience_entry* b) {
        if (a->score != b->score) return a->score < b->score;
        return a->group < b->group;
    });
    classification cls;
    for (int64_t i = 0; i < k; ++i) cls.redundant.push_back(order[(size_t)i]->group);
    std::sort(cls.redundant.begin(), cls.redundant.end());
    return cls;
}

classification hierarchical_search(const group_partition& part, const graph& g,
                                   const erasing_graph& eg, const salience_report& rep,
                                   int64_t k) {
    if (k < 0 || k > (int64_t)rep.entries.size()) fail(errc::config, "K out of range");
    std::vector<const salience_entry*> order;
    for (const auto& e : rep.entries) order.push_back(&e);
    std::sort(order.begin(), order.end(), [](const salience_entry* a, const salience_entry* b) {
        if (a->score != b->score) return a->score < b->score;
        return a->group < b->group;
    });
    classification cls;
    std::set<int> removed;
    for (const salience_entry* e : order) {
        if ((int64_t)cls.redundant.size() >= k) break;
        std::set<int> trial = removed;
        trial.insert(part.at(e->group).structure_id);
        if (erasing_valid(g, eg, trial)) {
            removed = std::move(trial);
            cls.redundant.push_back(e->group);
        }
    }
    cls.shortfall = (int64_t)cls.redundant.size() < k;
    std::sort(cls.redundant.begin(), cls.redundant.end());
    return cls;
}

lambda_choice lambda_interval(double cos_theta, double grad_norm) {
    lambda_choice out;
    if (cos_theta < 0.0) {
        out.lo = -cos_theta * grad_norm;
        out.hi = grad_norm / (-cos_theta);
        if (out.lo < out.hi) {
            out.lambda = 0.5 * (out.lo + out.hi);
            out.interval = true;
            return out;
        }
    }
    out.lambda = grad_norm; // arbitrary positive works; scale with the gradient
    out.lo = out.hi = 0.0;
    out.interval = false;
    return out;
}

train_result train_sparse(std::vector<float>& x, const group_partition& part,
                          const optimizer_config& cfg, opt_method method,
                          const train_hooks& hooks) {
    validate_common(cfg);
    if (!hooks.loss_grad) fail(errc::config, "train_sparse needs a loss callback");
    const int64_t warmup = cfg.warmup >= 0 ? cfg.warmup : std::max<int64_t>(1, cfg.steps / 10);
    if (warmup < 1 || warmup > cfg.steps)
        fail(errc::config, "warm-up steps must lie in [1, steps]");
    const int64_t k = resolve_target(cfg, part.zig_count());
    if (method == opt_method::h2spg && (!hooks.g || !hooks.eg))
        fail(errc::config, "hierarchical training needs the graph and erasing graph");

    train_result out;
    out.target = k;
    variant_state st(cfg, x.size());
    std::vector<double> ema(x.size(), 0.0);
    std::vector<float> grad;
    std::vector<double> est_buf, trial;
    std::set<int> redundant;

    for (int64_t t = 0; t < cfg.steps; ++t) {
        const double alpha = cfg.lr_at(t);
        const double loss = hooks.loss_grad(grad);
        if (!std::isfinite(loss))
            fail(errc::numeric,
                 "training diverged: non-finite loss at step " + std::to_string(t));
        if (grad.size() != x.size()) fail(errc::consistency, "gradient size mismatch");
        for (size_t i = 0; i < ema.size(); ++i)
            ema[i] = kEmaDecay * ema[i] + (1.0 - kEmaDecay) * (double)grad[i];

        if (t == warmup) {
            const salience_report rep = salience_scores(part, x, ema, cfg.tau, cfg.alpha_mix);
            out.classes = method == opt_method::dhspg
                              ? select_redundant_flat(part, rep, k)
                              : hierarchical_search(part, *hooks.g, *hooks.eg, rep, k);
            out.shortfall = out.classes.shortfall;
            redundant.clear();
            redundant.insert(out.classes.redundant.begin(), out.classes.redundant.end());
        }

        st.begin_step(t);
        for (const auto& vg : part.groups) {
            if (!vg.is_zig || !redundant.count(vg.id)) {
                for (const auto& [lo, hi] : vg.ranges)
                    for (int64_t i = lo; i < hi; ++i)
                        st.apply(x, i, (double)grad[(size_t)i], alpha);
                continue;
            }

            // Redundant group: build the trial iterate, then half-space
            // projection against the pre-step values (exact zero absorbs).
            est_buf.clear();
            double nx2 = 0.0, ne2 = 0.0, dxe = 0.0;
            for (const auto& [lo, hi] : vg.ranges)
                for (int64_t i = lo; i < hi; ++i) {
                    const double xi = (double)x[(size_t)i];
                    const double e = st.estimate(i, (double)grad[(size_t)i], xi);
                    est_buf.push_back(e);
                    nx2 += xi * xi;
                    ne2 += e * e;
                    dxe += xi * e;
                }
            const double xnorm = std::sqrt(nx2), enorm = std::sqrt(ne2);

            // Both methods share the penalized trial step: redundant groups
            // walk the dual-half-space direction so their magnitude decays
            // during training and the projection can absorb them early, which
            // gives the surviving groups time to adapt. Only the
            // classification above distinguishes the two methods.
            trial.clear();
            double dot_ref = 0.0;
            double c = dxe / (std::max(xnorm, cfg.tau) * std::max(enorm, cfg.tau));
            c = std::clamp(c, -1.0, 1.0);
            const lambda_choice pick = lambda_interval(c, enorm);
            const double xdiv = std::max(xnorm, cfg.tau);
            double ip_g = 0.0, ip_x = 0.0;
            size_t kk = 0;
            for (const auto& [lo, hi] : vg.ranges)
                for (int64_t i = lo; i < hi; ++i, ++kk) {
                    const double xi = (double)x[(size_t)i];
                    const double d = -est_buf[kk] - pick.lambda * xi / xdiv;
                    const double xt = xi + alpha * d;
                    trial.push_back(xt);
                    dot_ref += xt * xi;
                    ip_g += d * (-est_buf[kk]);
                    ip_x += d * (-xi);
                }
            if (cfg.record_lambda)
                out.lambda_trace.push_back({t, vg.id, pick, ip_g, ip_x});

            const bool to_zero = nx2 == 0.0 || dot_ref < cfg.eps_hs * nx2;
            kk = 0;
            for (const auto& [lo, hi] : vg.ranges)
                for (int64_t i = lo; i < hi; ++i, ++kk)
                    x[(size_t)i] = to_zero ? 0.0f : (float)trial[kk];
        }

        out.history.push_back({t, loss, count_zero_zigs(part, x), alpha});
    }

    // The classification is the contract: whatever survived projection-by-sign
    // is driven to exact zero so the reported sparsity is the achieved one.
    for (const auto& vg : part.groups)
        if (vg.is_zig && redundant.count(vg.id)) group_zero(vg, x);
    if (!out.history.empty()) out.history.back().zero_groups = count_zero_zigs(part, x);
    return out;
}

std::vector<double> plain_train(std::vector<float>& x,
                                const std::vector<std::pair<int64_t, int64_t>>& ranges,
                                const optimizer_config& cfg, const grad_fn& loss_grad) {
    validate_common(cfg);
    if (!loss_grad) fail(errc::config, "plain_train needs a loss callback");
    variant_state st(cfg, x.size());
    std::vector<float> grad;
    std::vector<double> losses;
    for (int64_t t = 0; t < cfg.steps; ++t) {
        const double alpha = cfg.lr_at(t);
        const double loss = loss_grad(grad);
        if (!std::isfinite(loss))
            fail(errc::numeric,
                 "training diverged: non-finite loss at step " + std::to_string(t));
        if (grad.size() != x.size()) fail(errc::consistency, "gradient size mismatch");
        losses.push_back(loss);
        st.begin_step(t);
        for (const auto& [lo, hi] : ranges)
            for (int64_t i = lo; i < hi; ++i) st.apply(x, i, (double)grad[(size_t)i], alpha);
    }
    return losses;
}

std::vector<std::pair<int64_t, int64_t>> trainable_ranges(const graph& g,
                                                          const param_store& ps) {
    std::vector<std::pair<int64_t, int64_t>> out;
    for (const auto& name : trainable_names(g)) {
        const auto& e = ps.info(name);
        out.emplace_back(e.offset, e.offset + e.size);
    }
    return out;
}

} // namespace oto
