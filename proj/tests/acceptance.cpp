// Acceptance gate: each criterion prints one [PASS]/[FAIL] line and the
// process exits non-zero if any failed. Tolerances and budgets are pinned
// here, not configurable. Criteria are independent; each builds its own
// models so an earlier failure cannot poison a later one.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "oto/dataset.hpp"
#include "oto/engine.hpp"
#include "oto/erase_space.hpp"
#include "oto/graph.hpp"
#include "oto/graph_io.hpp"
#include "oto/model_zoo.hpp"
#include "oto/params.hpp"
#include "oto/partition.hpp"
#include "oto/prune_space.hpp"
#include "oto/rng.hpp"
#include "oto/sparse_opt.hpp"
#include "oto/subnet.hpp"
#include "support/fixtures.hpp"

namespace {

using namespace oto;

struct outcome {
    bool pass = true;
    std::string detail;
};

void fail(outcome& o, const std::string& msg) {
    o.pass = false;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += msg;
}

std::string fmt(const char* f, ...) {
    va_list ap;
    va_start(ap, f);
    char buf[1024];
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// The graphs every sweep covers: the reference net plus the seeded fixture
// family (conv/BN/ReLU/pools/Add/Mul/Concat/Linear mixes).
std::vector<std::pair<std::string, std::function<model()>>> model_factories() {
    std::vector<std::pair<std::string, std::function<model()>>> v;
    v.emplace_back("demonet", [] { return make_demonet(1); });
    for (uint64_t s : fixtures::fixture_seeds())
        v.emplace_back(fmt("fixture-%llu", (unsigned long long)s),
                       [s] { return random_fixture(s); });
    return v;
}

std::map<std::string, tensor> random_inputs(const graph& g, int64_t batch, uint64_t seed) {
    std::map<std::string, tensor> in;
    rng r(seed);
    for (const auto& [id, shp] : manifest_input_shapes(g, batch)) {
        tensor t(shp);
        for (auto& v : t.data) v = (float)r.uniform(-1.0, 1.0);
        in.emplace(id, std::move(t));
    }
    return in;
}

std::map<std::string, std::string> param_owner(const graph& g) {
    std::map<std::string, std::string> own;
    for (const auto& [id, v] : g.vertices)
        for (const auto& p : v.params) own[p] = id;
    return own;
}

bool all_zero(const tensor& t) {
    for (float v : t.data)
        if (v != 0.0f) return false;
    return true;
}

// Exact-zero test for one channel of a cached output. Rank-4 tensors use the
// channel axis; rank-2 tensors fold HxW into the feature axis, so one channel
// is a block of features/channels consecutive columns (width 1 after a linear
// or a 1x1 spatial flatten).
bool channel_zero(const tensor& t, int64_t channels, int64_t c) {
    if (channels <= 0 || c < 0 || c >= channels) return false;
    if (t.shape.size() == 4) {
        const int64_t n = t.shape[0], ch = t.shape[1], hw = t.shape[2] * t.shape[3];
        if (ch != channels) return false;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < hw; ++j)
                if (t.data[(size_t)((i * ch + c) * hw + j)] != 0.0f) return false;
        return true;
    }
    if (t.shape.size() == 2) {
        const int64_t n = t.shape[0], f = t.shape[1];
        if (f % channels != 0) return false;
        const int64_t w = f / channels;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = c * w; j < (c + 1) * w; ++j)
                if (t.data[(size_t)(i * f + j)] != 0.0f) return false;
        return true;
    }
    return false;
}

const node_group* group_by_id(const node_grouping& gr, int id) {
    for (const auto& ng : gr.groups)
        if (ng.id == id) return &ng;
    return nullptr;
}

// ---------------------------------------------------------------------------
// 1. Zero invariance: zeroing any generated group forces its structure's
//    output channels (prune) or its segment endpoint plus attached rows
//    (erase) to exact zero on a batch of 16 random inputs. Budget: 60 s.
// ---------------------------------------------------------------------------
outcome c1_zero_invariance() {
    outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    int64_t pzigs = 0, ezigs = 0;
    uint64_t seed = 1000;
    for (auto& [name, make] : model_factories()) {
        model m = make();
        graph g16 = m.g;
        infer_shapes(g16, manifest_input_shapes(g16, 16));
        const auto inputs = random_inputs(g16, 16, ++seed);
        const std::vector<float> saved = m.params.arena();

        auto sp = fixtures::analyze(m, group_partition::mode_t::prune);
        const auto owner = param_owner(sp.g);
        for (const auto& vg : sp.part.groups) {
            if (!vg.is_zig) continue;
            ++pzigs;
            group_zero(vg, m.params.arena());
            const auto fc = forward(g16, m.params, inputs, run_mode::eval);
            const node_group* grp = group_by_id(sp.grouping, vg.structure_id);
            if (!grp) {
                fail(o, fmt("%s: pzig %d has no node group", name.c_str(), vg.id));
                return o;
            }
            // every parameterized row in the group, including normalization
            // rows attached from outside, must silence its owner's channel
            for (const auto& sl : vg.slices) {
                const tensor& out = fc.at.at(owner.at(sl.tensor)).out;
                const int64_t ch = out.shape.size() == 4 ? out.shape[1] : out.shape.back();
                for (int64_t r = sl.row_begin; r < sl.row_end; ++r)
                    if (!channel_zero(out, ch, r)) {
                        fail(o, fmt("%s: pzig %d leaks through %s row %lld", name.c_str(),
                                    vg.id, sl.tensor.c_str(), (long long)r));
                        return o;
                    }
            }
            // parameter-free members (pools, joints, relu, flatten) as well
            for (const auto& mem : grp->members)
                if (!channel_zero(fc.at.at(mem).out, grp->channels, vg.channel)) {
                    fail(o, fmt("%s: pzig %d leaks through member %s", name.c_str(), vg.id,
                                mem.c_str()));
                    return o;
                }
            m.params.arena() = saved;
        }

        auto se = fixtures::analyze(m, group_partition::mode_t::erase);
        const auto eowner = param_owner(se.g);
        for (const auto& vg : se.part.groups) {
            if (!vg.is_zig) continue;
            ++ezigs;
            group_zero(vg, m.params.arena());
            const auto fc = forward(g16, m.params, inputs, run_mode::eval);
            const segment& seg = se.segments.at(vg.structure_id);
            if (!all_zero(fc.at.at(seg.members.back()).out)) {
                fail(o, fmt("%s: ezig %d endpoint %s not zero", name.c_str(), vg.id,
                            seg.members.back().c_str()));
                return o;
            }
            const std::set<std::string> inside(seg.members.begin(), seg.members.end());
            for (const auto& sl : vg.slices) {
                const std::string& vid = eowner.at(sl.tensor);
                if (inside.count(vid)) continue; // covered by the endpoint
                const tensor& out = fc.at.at(vid).out;
                const int64_t ch = out.shape.size() == 4 ? out.shape[1] : out.shape.back();
                for (int64_t r = sl.row_begin; r < sl.row_end; ++r)
                    if (!channel_zero(out, ch, r)) {
                        fail(o, fmt("%s: ezig %d attached row %s[%lld] not zero", name.c_str(),
                                    vg.id, sl.tensor.c_str(), (long long)r));
                        return o;
                    }
            }
            m.params.arena() = saved;
        }
    }
    const double secs = seconds_since(t0);
    if (secs >= 60.0) fail(o, fmt("budget exceeded: %.1f s >= 60 s", secs));
    if (o.pass)
        o.detail = fmt("%lld pruning + %lld erasing groups across 7 graphs, exact zeros on 16 inputs",
                       (long long)pzigs, (long long)ezigs);
    return o;
}

// ---------------------------------------------------------------------------
// 2. Equivalence: train (prune at 0.25, erase at 0.5), build the subnetwork,
//    and require max abs output diff < 1e-5 over 16 inputs. Budget: 300 s.
// ---------------------------------------------------------------------------
outcome c2_equivalence() {
    outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    int runs = 0;
    for (auto& [name, make] : model_factories()) {
        for (int pass = 0; pass < 2; ++pass) {
            const bool prune = pass == 0;
            model m = make();
            auto sp = fixtures::analyze(m, prune ? group_partition::mode_t::prune
                                                 : group_partition::mode_t::erase);
            optimizer_config cfg;
            cfg.lr = 0.01;
            cfg.steps = 60;
            cfg.alpha_mix = 1.0;
            cfg.target_fraction = prune ? 0.25 : 0.5;
            const auto run = fixtures::train_synthetic(
                m, sp, cfg, prune ? opt_method::dhspg : opt_method::h2spg, 7, 4, 80);
            const subnetwork sub =
                prune ? construct_pruned(m, sp.grouping, sp.part, run.result.classes.redundant)
                      : construct_erased(m, sp.segments, sp.part, run.result.classes.redundant);
            const auto rep = verify_equivalence(m, sub.net, 16, 1e-5, 9);
            worst = std::max(worst, rep.max_abs_diff);
            ++runs;
            if (!rep.pass) {
                fail(o, fmt("%s %s: %s", name.c_str(), prune ? "prune" : "erase",
                            rep.detail.empty() ? fmt("diff %.3g", rep.max_abs_diff).c_str()
                                               : rep.detail.c_str()));
                return o;
            }
        }
    }
    const double secs = seconds_since(t0);
    if (secs >= 300.0) fail(o, fmt("budget exceeded: %.1f s >= 300 s", secs));
    if (o.pass) o.detail = fmt("%d pipelines, worst output diff %.3g (tol 1e-05)", runs, worst);
    return o;
}

// ---------------------------------------------------------------------------
// 3. Structural fidelity on the reference net. Exact assertions:
//    (a) conv5, conv6, bn5 share one pruning node group;
//    (b) bn6's gamma/beta rows split per channel across the conv2/conv3/conv4
//        groups at the concat offsets;
//    (c) {conv2, bn2} is an erasable segment, conv1's segment is not;
//    (d) with salience forced so conv7's segment scores lowest, the
//        hierarchical search rejects it and picks a survivable deletion.
// ---------------------------------------------------------------------------
outcome c3_structure() {
    outcome o;
    model m = make_demonet(1);
    auto sp = fixtures::analyze(m, group_partition::mode_t::prune);

    const node_group* g5 = sp.grouping.group_of("conv5");
    if (!g5 || g5 != sp.grouping.group_of("conv6") || g5 != sp.grouping.group_of("bn5"))
        fail(o, "conv5/conv6/bn5 not one node group");

    const auto covers = [](const variable_group& vg, const std::string& tensor, int64_t row) {
        for (const auto& sl : vg.slices)
            if (sl.tensor == tensor && sl.row_begin <= row && row < sl.row_end) return true;
        return false;
    };
    const auto zig_at = [&](int sid, int ch) -> const variable_group* {
        for (const auto& vg : sp.part.groups)
            if (vg.is_zig && vg.structure_id == sid && vg.channel == ch) return &vg;
        return nullptr;
    };
    const int b2 = sp.grouping.group_of("conv2")->id;
    const int b3 = sp.grouping.group_of("conv3")->id;
    const int b4 = sp.grouping.group_of("conv4")->id;
    for (int c = 0; c < 16 && o.pass; ++c) {
        const variable_group* z2 = zig_at(b2, c);
        const variable_group* z3 = zig_at(b3, c);
        const variable_group* z4 = zig_at(b4, c);
        if (!z2 || !z3 || !z4) {
            fail(o, "missing branch group channel");
            break;
        }
        if (!covers(*z2, "bn6.gamma", c) || !covers(*z2, "bn6.beta", c) ||
            !covers(*z3, "bn6.gamma", 16 + c) || !covers(*z4, "bn6.gamma", 32 + c) ||
            covers(*z2, "bn6.gamma", 16 + c))
            fail(o, fmt("bn6 rows not split at channel %d", c));
    }

    auto se = fixtures::analyze(m, group_partition::mode_t::erase);
    const segment& s2 = se.segments.at(se.segments.seg_of.at("conv2"));
    if (s2.members != std::vector<std::string>{"conv2", "bn2"} || !s2.erasable)
        fail(o, "{conv2, bn2} is not an erasable segment");
    if (se.segments.at(se.segments.seg_of.at("conv1")).erasable)
        fail(o, "conv1 segment wrongly erasable");

    const variable_group* z7 = nullptr;
    for (const auto& vg : se.part.groups) {
        if (!vg.is_zig) continue;
        const auto& mem = se.segments.at(vg.structure_id).members;
        if (std::find(mem.begin(), mem.end(), "conv7") != mem.end()) z7 = &vg;
    }
    if (!z7) {
        fail(o, "conv7 segment is not a scored candidate");
        return o;
    }
    salience_report forced;
    for (const auto& vg : se.part.groups)
        if (vg.is_zig)
            forced.entries.push_back({vg.id, 0.0, 0.0, vg.id == z7->id ? 0.001 : 0.5});
    const auto picked = hierarchical_search(se.part, se.g, se.segments, forced, 1);
    if (picked.redundant.size() != 1)
        fail(o, fmt("hierarchical search accepted %zu groups, wanted 1", picked.redundant.size()));
    else if (picked.redundant[0] == z7->id)
        fail(o, "hierarchical search accepted the disconnecting conv7 deletion");
    else if (picked.shortfall)
        fail(o, "unexpected shortfall");
    if (o.pass)
        o.detail = "shared group, split bn6 rows, {conv2,bn2} erasable, conv7 deletion rejected";
    return o;
}

// ---------------------------------------------------------------------------
// 4. Sparsity control: targets of 25/50/75% of the pruning groups end with
//    exactly that many zero groups after 1000 steps. Exact count.
// ---------------------------------------------------------------------------
outcome c4_sparsity_control() {
    outcome o;
    std::string counts;
    for (int quarter : {1, 2, 3}) {
        model m = make_demonet(1);
        auto sp = fixtures::analyze(m, group_partition::mode_t::prune);
        const int64_t zc = sp.part.zig_count();
        const int64_t k = zc * quarter / 4;
        optimizer_config cfg;
        cfg.lr = 0.01;
        cfg.steps = 1000;
        cfg.alpha_mix = 1.0;
        cfg.target_count = k;
        const auto run = fixtures::train_synthetic(m, sp, cfg, opt_method::dhspg, 5, 4, 160);
        int64_t zero = 0;
        for (const auto& vg : sp.part.groups)
            if (vg.is_zig && group_is_zero(vg, m.params.arena())) ++zero;
        if (zero != k || (int64_t)run.result.classes.redundant.size() != k)
            fail(o, fmt("target %lld of %lld: ended with %lld zero groups", (long long)k,
                        (long long)zc, (long long)zero));
        counts += fmt("%s%lld/%lld", counts.empty() ? "" : ", ", (long long)zero, (long long)zc);
    }
    if (o.pass) o.detail = "exact zero-group counts " + counts + " after 1000 steps";
    return o;
}

// ---------------------------------------------------------------------------
// 5. Hierarchy ablation: erase fraction 0.9 on the residual-pair toy. The
//    hierarchical search must stop at a valid subnetwork (one branch per
//    pair, shortfall flagged) that builds and runs; flat bottom-k selection
//    over the same groups must produce an invalid removal set. Budget: 600 s.
// ---------------------------------------------------------------------------
outcome c5_hierarchy_ablation() {
    outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    int flat_invalid = 0;
    for (uint64_t s : {1ull, 2ull, 3ull}) {
        model m = make_regnet_toy(2);
        auto sp = fixtures::analyze(m, group_partition::mode_t::erase);
        const int64_t zc = sp.part.zig_count();
        optimizer_config cfg;
        cfg.lr = 0.01;
        cfg.steps = 60;
        cfg.alpha_mix = 1.0;
        cfg.target_fraction = 0.9;
        const int64_t k = resolve_target(cfg, (int)zc);
        const auto run = fixtures::train_synthetic(m, sp, cfg, opt_method::h2spg, s, 4, 80);

        std::set<int> removed;
        for (int gid : run.result.classes.redundant)
            removed.insert(sp.part.at(gid).structure_id);
        if (!run.result.shortfall || (int64_t)removed.size() >= k)
            fail(o, fmt("seed %llu: expected a shortfall below target %lld",
                        (unsigned long long)s, (long long)k));
        if (!erasing_valid(sp.g, sp.segments, removed))
            fail(o, fmt("seed %llu: hierarchical removal set invalid", (unsigned long long)s));
        const subnetwork sub =
            construct_erased(m, sp.segments, sp.part, run.result.classes.redundant);
        model sm = sub.net;
        graph gs = sm.g;
        infer_shapes(gs, manifest_input_shapes(gs, 2));
        forward(gs, sm.params, random_inputs(gs, 2, 70 + s), run_mode::eval);
        const auto rep = verify_equivalence(m, sub.net, 8, 1e-5, s);
        if (!rep.pass)
            fail(o, fmt("seed %llu: subnetwork not equivalent (%s)", (unsigned long long)s,
                        rep.detail.c_str()));

        // flat selection at the same target, scored on the trained state
        batcher bt(run.data, 4, 999);
        tensor images;
        std::vector<int> labels;
        graph gt = m.g;
        infer_shapes(gt, manifest_input_shapes(gt, 4));
        bt.next(images, labels);
        const auto fc =
            forward(gt, m.params, {{gt.inputs.at(0), images}}, run_mode::eval);
        const auto ce = softmax_cross_entropy(fc.at.at(gt.outputs.at(0)).out, labels);
        const auto grad = backward(gt, m.params, fc, {{gt.outputs.at(0), ce.grad}});
        const std::vector<double> gd(grad.begin(), grad.end());
        const auto scores = salience_scores(sp.part, m.params.arena(), gd, 1e-6, 1.0);
        const auto flat = select_redundant_flat(sp.part, scores, k);
        std::set<int> flat_removed;
        for (int gid : flat.redundant) flat_removed.insert(sp.part.at(gid).structure_id);
        if (!erasing_valid(sp.g, sp.segments, flat_removed)) ++flat_invalid;
    }
    if (flat_invalid == 0) fail(o, "flat selection never produced an invalid removal set");
    const double secs = seconds_since(t0);
    if (secs >= 600.0) fail(o, fmt("budget exceeded: %.1f s >= 600 s", secs));
    if (o.pass)
        o.detail = fmt("hierarchical valid and equivalent on 3 seeds, flat invalid on %d of 3",
                       flat_invalid);
    return o;
}

// ---------------------------------------------------------------------------
// 6. Accuracy retention at desk scale: 5 epochs full vs 5 epochs erase at
//    fraction 0.5. The subnetwork's top-1 must land within 2 percentage
//    points of the full run and cut parameters by at least 30%. Uses the
//    Fashion-MNIST IDX files when present, otherwise the synthetic set.
//    Budget: 1800 s.
// ---------------------------------------------------------------------------
outcome c6_accuracy_retention() {
    outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    namespace fs = std::filesystem;

    dataset train_ds, eval_ds;
    std::string source;
    for (const char* root : {"data/fashion-mnist", "../data/fashion-mnist"}) {
        const fs::path p(root);
        if (fs::exists(p / "train-images-idx3-ubyte") &&
            fs::exists(p / "train-labels-idx1-ubyte") &&
            fs::exists(p / "t10k-images-idx3-ubyte") &&
            fs::exists(p / "t10k-labels-idx1-ubyte")) {
            train_ds = load_idx((p / "train-images-idx3-ubyte").string(),
                                (p / "train-labels-idx1-ubyte").string());
            eval_ds = load_idx((p / "t10k-images-idx3-ubyte").string(),
                               (p / "t10k-labels-idx1-ubyte").string());
            source = "fashion-mnist";
            break;
        }
    }
    if (source.empty()) {
        const dataset all = gen_synthetic(10, 3000, shape_t{1, 28, 28}, 1234);
        const int64_t per = all.sample_scalars();
        const auto slice = [&](int64_t b, int64_t e) {
            dataset d;
            d.classes = all.classes;
            shape_t s = all.images.shape;
            s[0] = e - b;
            d.images = tensor(s);
            std::copy(all.images.data.begin() + b * per, all.images.data.begin() + e * per,
                      d.images.data.begin());
            d.labels.assign(all.labels.begin() + b, all.labels.begin() + e);
            return d;
        };
        train_ds = slice(0, 2000);
        eval_ds = slice(2000, 3000);
        source = "synthetic";
    }

    // small batches buy optimization steps within the fixed epoch budget; the
    // penalized groups need those steps to drain and the survivors to adapt
    const int64_t batch = source == "synthetic" ? 8 : 32;
    const int64_t steps = 5 * (train_ds.size() / batch);
    const auto train_on = [&](model& m, const fixtures::spaces& sp, optimizer_config cfg,
                              opt_method method, uint64_t seed) {
        graph g = m.g;
        infer_shapes(g, manifest_input_shapes(g, batch));
        const std::string in_id = g.inputs.at(0), out_id = g.outputs.at(0);
        batcher bt(train_ds, batch, seed);
        tensor images;
        std::vector<int> labels;
        train_hooks hooks;
        hooks.g = &g;
        hooks.eg = &sp.segments;
        hooks.loss_grad = [&, in_id, out_id](std::vector<float>& grad) {
            bt.next(images, labels);
            const auto fc = forward(g, m.params, {{in_id, images}}, run_mode::train);
            const auto ce = softmax_cross_entropy(fc.at.at(out_id).out, labels);
            grad = backward(g, m.params, fc, {{out_id, ce.grad}});
            return ce.loss;
        };
        return train_sparse(m.params.arena(), sp.part, cfg, method, hooks);
    };

    model full = make_demonet(1);
    auto sp_full = fixtures::analyze(full, group_partition::mode_t::erase);
    optimizer_config cfg;
    cfg.lr = 0.05;
    cfg.steps = steps;
    cfg.alpha_mix = 1.0;
    cfg.target_count = 0;
    train_on(full, sp_full, cfg, opt_method::h2spg, 3);
    const double full_acc = fixtures::accuracy(full, eval_ds, 50);

    model sparse = make_demonet(1);
    auto sp_er = fixtures::analyze(sparse, group_partition::mode_t::erase);
    cfg.target_count = -1;
    cfg.target_fraction = 0.5;
    const auto run = train_on(sparse, sp_er, cfg, opt_method::h2spg, 3);
    const subnetwork sub =
        construct_erased(sparse, sp_er.segments, sp_er.part, run.classes.redundant);
    const double sub_acc = fixtures::accuracy(sub.net, eval_ds, 50);

    const double full_params = (double)count_cost(full).params;
    const double sub_params = (double)count_cost(sub.net).params;
    const double cut = 1.0 - sub_params / full_params;
    const double gap = std::abs(full_acc - sub_acc);

    if (gap > 0.02)
        fail(o, fmt("top-1 gap %.2f pp exceeds 2.0 pp (full %.2f%%, sub %.2f%%)", gap * 100.0,
                    full_acc * 100.0, sub_acc * 100.0));
    if (cut < 0.30) fail(o, fmt("parameter cut %.1f%% below 30%%", cut * 100.0));
    const double secs = seconds_since(t0);
    if (secs >= 1800.0) fail(o, fmt("budget exceeded: %.1f s >= 1800 s", secs));
    if (o.pass)
        o.detail = fmt("%s: full %.2f%%, sub %.2f%% (gap %.2f pp), params cut %.1f%%",
                       source.c_str(), full_acc * 100.0, sub_acc * 100.0, gap * 100.0,
                       cut * 100.0);
    return o;
}

// ---------------------------------------------------------------------------
// 7. Optimizer geometry over 200 recorded hybrid steps: every
//    interval-selected penalty lies strictly inside its interval with both
//    half-space inner products positive, and the zero-group count never
//    decreases (projection to zero is absorbing). Exact assertions.
// ---------------------------------------------------------------------------
outcome c7_optimizer_geometry() {
    outcome o;
    model m = make_demonet(1);
    auto sp = fixtures::analyze(m, group_partition::mode_t::prune);
    optimizer_config cfg;
    cfg.lr = 0.01;
    cfg.steps = 250;
    cfg.warmup = 50;
    cfg.alpha_mix = 1.0;
    cfg.target_fraction = 0.25;
    cfg.record_lambda = true;
    const auto run = fixtures::train_synthetic(m, sp, cfg, opt_method::dhspg, 11, 4, 160);

    std::set<int64_t> steps_seen;
    int64_t intervals = 0;
    for (const auto& rec : run.result.lambda_trace) {
        steps_seen.insert(rec.step);
        if (rec.pick.interval) {
            ++intervals;
            if (!(rec.pick.lo < rec.pick.lambda && rec.pick.lambda < rec.pick.hi))
                fail(o, fmt("step %lld group %d: lambda %.6g outside (%.6g, %.6g)",
                            (long long)rec.step, rec.group, rec.pick.lambda, rec.pick.lo,
                            rec.pick.hi));
            if (!(rec.ip_grad > 0.0 && rec.ip_x > 0.0))
                fail(o, fmt("step %lld group %d: inner products %.3g, %.3g not positive",
                            (long long)rec.step, rec.group, rec.ip_grad, rec.ip_x));
        } else if (!(rec.pick.lambda >= 0.0)) {
            fail(o, fmt("step %lld group %d: negative fallback lambda", (long long)rec.step,
                        rec.group));
        }
        if (!o.pass) return o;
    }
    if ((int64_t)steps_seen.size() != 200)
        fail(o, fmt("recorded %zu hybrid steps, wanted 200", steps_seen.size()));
    if (intervals < 1) fail(o, "no interval-selected penalties observed");

    const auto& h = run.result.history;
    for (size_t i = 1; i < h.size(); ++i)
        if (h[i].zero_groups < h[i - 1].zero_groups) {
            fail(o, fmt("zero-group count dropped at step %lld", (long long)h[i].step));
            break;
        }
    if (!h.empty() && h.back().zero_groups != (int)run.result.classes.redundant.size())
        fail(o, "final zero-group count does not match the classification");
    if (o.pass)
        o.detail = fmt("%lld interval picks over 200 hybrid steps, zero count non-decreasing",
                       (long long)intervals);
    return o;
}

// ---------------------------------------------------------------------------
// 8. Gradient oracle: reverse-mode gradients agree with central differences,
//    under 1e-3 on every graph in the sweep and under 1e-5 on the kink-free
//    linear toy.
// ---------------------------------------------------------------------------
outcome c8_gradient_oracle() {
    outcome o;
    double worst = 0.0;
    for (auto& [name, make] : model_factories()) {
        model m = make();
        infer_shapes(m.g, manifest_input_shapes(m.g, 2));
        const auto inputs = random_inputs(m.g, 2, 31);
        const auto rep = finite_diff_check(m.g, m.params, inputs, 1e-3, 200, 7);
        worst = std::max(worst, rep.max_rel_err);
        if (!(rep.max_rel_err < 1e-3))
            fail(o, fmt("%s: max rel err %.3g >= 1e-3", name.c_str(), rep.max_rel_err));
    }
    {
        // exactly linear in every parameter: a wide step has no truncation
        // term and averages away f32 rounding
        model m = make_linear_toy(2);
        infer_shapes(m.g, manifest_input_shapes(m.g, 4));
        const auto rep = finite_diff_check(m.g, m.params, random_inputs(m.g, 4, 33), 5e-2, 28, 7);
        if (!(rep.max_rel_err < 1e-5))
            fail(o, fmt("linear toy: max rel err %.3g >= 1e-5", rep.max_rel_err));
        if (o.pass)
            o.detail = fmt("worst rel err %.3g across 7 graphs, %.3g on the linear toy", worst,
                           rep.max_rel_err);
    }
    return o;
}

// ---------------------------------------------------------------------------
// 9. Reduction to baseline: a zero-target sparse run is bit-identical to the
//    plain optimizer loop for 100 steps, for all four variants.
// ---------------------------------------------------------------------------
outcome c9_baseline_reduction() {
    outcome o;
    int matched = 0;
    for (opt_variant variant :
         {opt_variant::sgd, opt_variant::momentum, opt_variant::adam, opt_variant::adamw}) {
        optimizer_config cfg;
        cfg.variant = variant;
        cfg.lr = 0.001; // parity is about bit-identity; keep the loop stable
        cfg.steps = 100;
        cfg.target_count = 0;
        cfg.weight_decay = variant == opt_variant::adamw ? 0.05 : 0.0;

        model a = make_demonet(1);
        auto sp = fixtures::analyze(a, group_partition::mode_t::prune);
        fixtures::train_synthetic(a, sp, cfg, opt_method::dhspg, 13, 4, 80);

        // same batches, same loss, through the reference loop
        model b = make_demonet(1);
        graph g = b.g;
        infer_shapes(g, manifest_input_shapes(g, 4));
        const std::string in_id = g.inputs.at(0), out_id = g.outputs.at(0);
        const int classes = (int)g.at(g.producers(out_id).at(0)).attr_int("out_features");
        const auto shapes = manifest_input_shapes(g, 1);
        const shape_t sample(shapes.begin()->second.begin() + 1, shapes.begin()->second.end());
        const dataset data = gen_synthetic(classes, 80, sample, 13);
        batcher bt(data, 4, 14);
        tensor images;
        std::vector<int> labels;
        const auto grad_fn = [&](std::vector<float>& grad) {
            bt.next(images, labels);
            const auto fc = forward(g, b.params, {{in_id, images}}, run_mode::train);
            const auto ce = softmax_cross_entropy(fc.at.at(out_id).out, labels);
            grad = backward(g, b.params, fc, {{out_id, ce.grad}});
            return ce.loss;
        };
        plain_train(b.params.arena(), trainable_ranges(b.g, b.params), cfg, grad_fn);

        if (a.params.arena() != b.params.arena()) {
            fail(o, fmt("%s: iterates diverge from the plain loop", variant_name(variant)));
            continue;
        }
        ++matched;
    }
    if (o.pass) o.detail = fmt("%d of 4 variants bit-identical over 100 steps", matched);
    return o;
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<outcome()>>> criteria = {
        {"zero invariance", c1_zero_invariance},
        {"equivalence", c2_equivalence},
        {"structural fidelity", c3_structure},
        {"sparsity control", c4_sparsity_control},
        {"hierarchy ablation", c5_hierarchy_ablation},
        {"accuracy retention", c6_accuracy_retention},
        {"optimizer geometry", c7_optimizer_geometry},
        {"gradient oracle", c8_gradient_oracle},
        {"baseline reduction", c9_baseline_reduction},
    };
    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = fmt("exception: %s", e.what());
        }
        std::printf("[%s] %zu. %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1,
                    criteria[i].first, o.detail.empty() ? "ok" : o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    std::printf("%zu of 9 criteria passed\n", criteria.size() - (size_t)failures);
    return failures == 0 ? 0 : 1;
}
