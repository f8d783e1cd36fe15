#include "oto/subnet.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "oto/engine.hpp"
#include "oto/rng.hpp"

namespace oto {

namespace {

int64_t channel_width(const shape_t& out_shape) {
    return out_shape.size() >= 2 ? out_shape[1] : 0;
}

using kept_map = std::map<std::string, std::vector<int64_t>>;

// Kept output indices per surviving vertex, in the original index space.
// Channels for spatial tensors, features after flatten. removed_vertices is
// the erase-mode input, removed_rows the prune-mode one.
kept_map compute_kept(const graph& g, const std::set<std::string>& removed_vertices,
                      const std::map<std::string, std::set<int64_t>>& removed_rows) {
    kept_map kept;
    for (const auto& id : g.topological_order()) {
        if (removed_vertices.count(id)) continue;
        const vertex& v = g.at(id);
        if (v.kind == op_kind::output) continue;
        const shape_t& os = *v.out_shape;
        switch (v.kind) {
        case op_kind::input: {
            std::vector<int64_t> a((size_t)channel_width(os));
            std::iota(a.begin(), a.end(), 0);
            kept[id] = std::move(a);
            break;
        }
        case op_kind::conv2d:
        case op_kind::linear: {
            std::vector<int64_t> ks;
            const auto it = removed_rows.find(id);
            for (int64_t c = 0; c < channel_width(os); ++c)
                if (it == removed_rows.end() || !it->second.count(c)) ks.push_back(c);
            kept[id] = std::move(ks);
            break;
        }
        case op_kind::batchnorm2d:
        case op_kind::relu:
        case op_kind::maxpool2d:
        case op_kind::avgpool2d:
            kept[id] = kept.at(g.producers(id)[0]);
            break;
        case op_kind::add:
        case op_kind::mul: {
            const std::vector<int64_t>* first = nullptr;
            for (const auto& p : g.producers(id)) {
                if (removed_vertices.count(p)) continue;
                if (!first)
                    first = &kept.at(p);
                else if (*first != kept.at(p))
                    fail(errc::consistency,
                         "surgery: operands of '" + id + "' disagree on kept channels");
            }
            if (!first)
                fail(errc::consistency, "surgery: joint '" + id + "' lost every operand");
            kept[id] = *first;
            break;
        }
        case op_kind::concat: {
            const auto off = concat_offsets(g, id);
            const auto prods = g.producers(id);
            std::vector<int64_t> ks;
            for (size_t s = 0; s < prods.size(); ++s) {
                if (removed_vertices.count(prods[s])) continue;
                for (int64_t c : kept.at(prods[s])) ks.push_back(off[s] + c);
            }
            if (ks.empty())
                fail(errc::consistency, "surgery: concat '" + id + "' lost every operand");
            kept[id] = std::move(ks);
            break;
        }
        case op_kind::flatten: {
            const auto p = g.producers(id)[0];
            const shape_t& in = *g.at(p).out_shape;
            const int64_t hw = in.size() == 4 ? in[2] * in[3] : 1;
            std::vector<int64_t> ks;
            for (int64_t c : kept.at(p))
                for (int64_t j = 0; j < hw; ++j) ks.push_back(c * hw + j);
            kept[id] = std::move(ks);
            break;
        }
        case op_kind::unknown: {
            for (const auto& p : g.producers(id)) {
                const vertex& pv = g.at(p);
                if ((int64_t)kept.at(p).size() != channel_width(*pv.out_shape))
                    fail(errc::validity,
                         "surgery cannot adjust unknown op '" + id + "' to a sliced input");
            }
            std::vector<int64_t> a((size_t)channel_width(os));
            std::iota(a.begin(), a.end(), 0);
            kept[id] = std::move(a);
            break;
        }
        case op_kind::output:
            break;
        }
    }
    return kept;
}

std::vector<float> slice_rows(const float* src, const shape_t& shape,
                              const std::vector<int64_t>& rows) {
    const int64_t rs = row_size_of(shape);
    std::vector<float> out;
    out.reserve(rows.size() * (size_t)rs);
    for (int64_t r : rows) out.insert(out.end(), src + r * rs, src + (r + 1) * rs);
    return out;
}

std::vector<float> slice_rows_cols(const float* src, const shape_t& shape,
                                   const std::vector<int64_t>& rows,
                                   const std::vector<int64_t>& cols) {
    const int64_t in = shape[1];
    const int64_t cell = shape.size() == 4 ? shape[2] * shape[3] : 1;
    std::vector<float> out;
    out.reserve(rows.size() * cols.size() * (size_t)cell);
    for (int64_t r : rows)
        for (int64_t c : cols)
            out.insert(out.end(), src + (r * in + c) * cell, src + (r * in + c + 1) * cell);
    return out;
}

void check_groups_zero(const model& full, const group_partition& part,
                       const std::vector<int>& redundant) {
    for (int id : redundant) {
        const variable_group& vg = part.at(id);
        if (!vg.is_zig)
            fail(errc::consistency,
                 "group " + std::to_string(id) + " is not a removal-structure group");
        if (!group_is_zero(vg, full.params.arena()))
            fail(errc::consistency, "group " + std::to_string(id) +
                                        " is marked redundant but is not exactly zero");
    }
}

// Slice the parameters of one vertex into the new store; the producer argument
// is the vertex feeding it in the ORIGINAL graph (splices do not change the
// values that flow).
void slice_vertex_params(const model& full, const kept_map& kept, vertex& v,
                         const std::string& producer, bool prune_mode, param_store& out,
                         std::map<std::string, tensor_origin>& provenance) {
    if (v.params.empty()) return;
    const std::vector<int64_t>& rows = kept.at(v.id);
    if (v.kind == op_kind::conv2d || v.kind == op_kind::linear) {
        const std::vector<int64_t>& cols = kept.at(producer);
        if (rows.empty())
            fail(errc::validity, prune_mode
                                     ? "degenerate layer: '" + v.id + "' loses every output channel"
                                     : "surgery: '" + v.id + "' loses every output channel");
        if (cols.empty())
            fail(errc::validity, prune_mode
                                     ? "degenerate layer: '" + v.id + "' loses every input channel"
                                     : "surgery: '" + v.id + "' loses every input channel");
        const auto& we = full.params.info(v.params[0]);
        shape_t ws = we.shape;
        ws[0] = (int64_t)rows.size();
        ws[1] = (int64_t)cols.size();
        out.add(we.name, ws,
                slice_rows_cols(full.params.data(we.name), we.shape, rows, cols).data());
        provenance[we.name] = {we.name, rows, cols};
        if (v.params.size() > 1) {
            const auto& be = full.params.info(v.params[1]);
            out.add(be.name, {(int64_t)rows.size()},
                    slice_rows(full.params.data(be.name), be.shape, rows).data());
            provenance[be.name] = {be.name, rows, {}};
        }
        if (v.kind == op_kind::conv2d) {
            v.attrs["out_channels"] = {(int64_t)rows.size()};
            v.attrs["in_channels"] = {(int64_t)cols.size()};
        } else {
            v.attrs["out_features"] = {(int64_t)rows.size()};
            v.attrs["in_features"] = {(int64_t)cols.size()};
        }
    } else if (v.kind == op_kind::batchnorm2d) {
        if (rows.empty())
            fail(errc::validity, "degenerate layer: '" + v.id + "' loses every channel");
        for (const auto& name : v.params) {
            const auto& e = full.params.info(name);
            out.add(name, {(int64_t)rows.size()},
                    slice_rows(full.params.data(name), e.shape, rows).data());
            provenance[name] = {name, rows, {}};
        }
        v.attrs["channels"] = {(int64_t)rows.size()};
    } else {
        for (const auto& name : v.params) {
            const auto& e = full.params.info(name);
            out.add(name, e.shape, full.params.data(name));
            std::vector<int64_t> all((size_t)rows_of(e.shape));
            std::iota(all.begin(), all.end(), 0);
            provenance[name] = {name, all, {}};
        }
    }
}

graph shapes_ready(const graph& src) {
    graph g = src;
    infer_shapes(g, manifest_input_shapes(g, 1));
    return g;
}

} // namespace

subnetwork construct_pruned(const model& full, const node_grouping& grouping,
                            const group_partition& part, const std::vector<int>& redundant) {
    if (part.mode != group_partition::mode_t::prune)
        fail(errc::consistency, "construct_pruned needs a pruning partition");
    check_groups_zero(full, part, redundant);

    const graph g = shapes_ready(full.g);
    std::map<std::string, std::set<int64_t>> removed_rows;
    for (int id : redundant) {
        const variable_group& vg = part.at(id);
        const node_group& ng = grouping.groups[(size_t)vg.structure_id];
        for (const auto& s : ng.stems) removed_rows[s].insert(vg.channel);
    }
    const kept_map kept = compute_kept(g, {}, removed_rows);

    subnetwork sub;
    sub.removed = redundant;
    std::sort(sub.removed.begin(), sub.removed.end());
    sub.net.g = full.g;
    for (const auto& id : g.topological_order()) {
        const vertex& v = g.at(id);
        if (v.kind == op_kind::input || v.kind == op_kind::output) continue;
        slice_vertex_params(full, kept, sub.net.g.at(id), g.producers(id)[0], true,
                            sub.net.params, sub.provenance);
    }
    infer_shapes(sub.net.g, manifest_input_shapes(sub.net.g, 1));
    validate_params(sub.net.g, sub.net.params);
    return sub;
}

subnetwork construct_erased(const model& full, const erasing_graph& eg,
                            const group_partition& part, const std::vector<int>& redundant) {
    if (part.mode != group_partition::mode_t::erase)
        fail(errc::consistency, "construct_erased needs an erasing partition");
    check_groups_zero(full, part, redundant);

    const graph g = shapes_ready(full.g);
    std::set<std::string> removed_vertices;
    std::set<int> removed_segments;
    for (int id : redundant) {
        const variable_group& vg = part.at(id);
        removed_segments.insert(vg.structure_id);
        for (const auto& m : eg.at(vg.structure_id).members) removed_vertices.insert(m);
    }
    const kept_map kept = compute_kept(g, removed_vertices, {});

    subnetwork sub;
    sub.removed.assign(removed_segments.begin(), removed_segments.end());

    // Pass 1+2: rebuild the graph without the removed vertices, slicing the
    // parameters of every survivor against its original producer.
    graph ng;
    for (const auto& [id, v] : g.vertices) {
        if (removed_vertices.count(id)) continue;
        vertex nv = v;
        nv.out_shape.reset();
        if (v.kind != op_kind::input && v.kind != op_kind::output)
            slice_vertex_params(full, kept, nv, g.producers(id)[0], false, sub.net.params,
                                sub.provenance);
        ng.add_vertex(std::move(nv));
    }
    // Surviving edges, operand slots renumbered densely in original order.
    std::map<std::string, std::vector<edge>> incoming;
    for (const auto& e : g.edges) {
        if (removed_vertices.count(e.src) || removed_vertices.count(e.dst)) continue;
        incoming[e.dst].push_back(e);
    }
    for (auto& [dst, es] : incoming) {
        std::sort(es.begin(), es.end(),
                  [](const edge& a, const edge& b) { return a.slot < b.slot; });
        for (size_t s = 0; s < es.size(); ++s) ng.add_edge(es[s].src, dst, (int)s);
    }
    ng.inputs = g.inputs;
    ng.outputs = g.outputs;

    // Pass 3: fixed point. Single-input Concat/Add/Mul turn into pass-through
    // edges (consumer slots preserved); vertices with no edges at all go away.
    bool changed = true;
    while (changed) {
        changed = false;
        std::map<std::string, int> in_deg, out_deg;
        for (const auto& e : ng.edges) {
            in_deg[e.dst]++;
            out_deg[e.src]++;
        }
        for (const auto& [id, v] : ng.vertices) {
            const bool joint = v.kind == op_kind::add || v.kind == op_kind::mul ||
                               v.kind == op_kind::concat;
            if (joint && in_deg[id] == 1) {
                std::string src;
                std::vector<edge> outs;
                for (const auto& e : ng.edges) {
                    if (e.dst == id) src = e.src;
                    if (e.src == id) outs.push_back(e);
                }
                std::vector<edge> rest;
                for (const auto& e : ng.edges)
                    if (e.src != id && e.dst != id) rest.push_back(e);
                ng.edges = std::move(rest);
                for (const auto& e : outs) ng.add_edge(src, e.dst, e.slot);
                ng.vertices.erase(id);
                changed = true;
                break;
            }
            if (v.kind != op_kind::input && v.kind != op_kind::output && in_deg[id] == 0 &&
                out_deg[id] == 0) {
                ng.vertices.erase(id);
                changed = true;
                break;
            }
        }
    }

    ng.validate();
    infer_shapes(ng, manifest_input_shapes(ng, 1));
    sub.net.g = std::move(ng);
    validate_params(sub.net.g, sub.net.params);
    return sub;
}

equivalence_report verify_equivalence(const model& full, const model& sub, int n, double tol,
                                      uint64_t seed) {
    equivalence_report rep;
    if (full.g.inputs != sub.g.inputs) {
        rep.detail = "input vertex sets differ";
        return rep;
    }
    if (full.g.outputs != sub.g.outputs) {
        rep.detail = "output vertex sets differ";
        return rep;
    }

    graph fg = full.g, sg = sub.g;
    const auto shapes = manifest_input_shapes(fg, n);
    infer_shapes(fg, shapes);
    try {
        infer_shapes(sg, manifest_input_shapes(sg, n));
    } catch (const error& e) {
        rep.detail = std::string("subnetwork shape inference failed: ") + e.what();
        return rep;
    }

    rng r(seed);
    std::map<std::string, tensor> inputs;
    for (const auto& [id, shape] : shapes) {
        tensor t(shape);
        for (auto& x : t.data) x = (float)r.uniform(-1.0, 1.0);
        inputs[id] = std::move(t);
    }

    param_store fps = full.params, sps = sub.params;
    const forward_cache fc = forward(fg, fps, inputs, run_mode::eval);
    const forward_cache sc = forward(sg, sps, inputs, run_mode::eval);

    double maxdiff = 0.0;
    for (const auto& out : fg.outputs) {
        const tensor& a = fc.at.at(out).out;
        const tensor& b = sc.at.at(out).out;
        if (a.shape != b.shape) {
            rep.detail = "output '" + out + "': shape " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape);
            return rep;
        }
        for (size_t i = 0; i < a.data.size(); ++i)
            maxdiff = std::max(maxdiff, (double)std::abs(a.data[i] - b.data[i]));
    }
    rep.max_abs_diff = maxdiff;
    rep.pass = maxdiff < tol;
    if (!rep.pass) rep.detail = "max abs diff above tolerance";
    return rep;
}

cost_report count_cost(const model& m) {
    graph g = shapes_ready(m.g);
    cost_report rep;
    for (const auto& id : g.topological_order()) {
        const vertex& v = g.at(id);
        if (v.kind == op_kind::input || v.kind == op_kind::output) continue;
        op_cost oc;
        oc.id = id;
        oc.op = op_name(v.kind);
        for (const auto& p : v.params) oc.params += m.params.info(p).size;
        if (v.kind == op_kind::conv2d) {
            const shape_t& os = *v.out_shape;
            const auto [kh, kw] = v.attr_pair("kernel");
            oc.macs = os[1] * os[2] * os[3] * v.attr_int("in_channels") * kh * kw;
        } else if (v.kind == op_kind::linear) {
            oc.macs = v.attr_int("out_features") * v.attr_int("in_features");
        }
        rep.macs += oc.macs;
        rep.params += oc.params;
        rep.per_op.push_back(std::move(oc));
    }
    return rep;
}

std::string surgery_report(const model& full, const subnetwork& sub) {
    const cost_report a = count_cost(full);
    const cost_report b = count_cost(sub.net);
    std::ostringstream os;
    os << "surgery report\n";
    os << "convention: MACs per sample (batch 1), conv and linear only; params count\n";
    os << "every stored scalar including batch-norm running statistics.\n";
    os << "full : " << a.macs << " MACs, " << a.params << " params\n";
    os << "sub  : " << b.macs << " MACs, " << b.params << " params\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "kept : %.1f%% MACs, %.1f%% params\n",
                  a.macs ? 100.0 * (double)b.macs / (double)a.macs : 100.0,
                  a.params ? 100.0 * (double)b.params / (double)a.params : 100.0);
    os << buf;
    os << "removed structures:";
    for (int id : sub.removed) os << ' ' << id;
    os << "\n";
    return os.str();
}

std::string provenance_json(const subnetwork& sub) {
    nlohmann::json j;
    j["removed"] = sub.removed;
    nlohmann::json jt;
    for (const auto& [name, origin] : sub.provenance) {
        nlohmann::json e;
        e["source"] = origin.source;
        e["kept_rows"] = origin.kept_rows;
        if (!origin.kept_cols.empty()) e["kept_cols"] = origin.kept_cols;
        jt[name] = e;
    }
    j["tensors"] = jt;
    return j.dump(2) + "\n";
}

} // namespace oto
