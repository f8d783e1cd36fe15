#include "oto/prune_space.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <set>
#include <tuple>

namespace oto {

namespace {

struct union_find {
    std::vector<int> parent;
    explicit union_find(size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

bool is_conn(const vertex& v) {
    if (v.kind == op_kind::input || v.kind == op_kind::output) return false;
    const vertex_role r = classify_vertex(v.kind);
    return r == vertex_role::accessory || r == vertex_role::joint_sd ||
           r == vertex_role::unknown;
}

bool is_stem(const vertex& v) { return classify_vertex(v.kind) == vertex_role::stem; }

int64_t stem_out_channels(const vertex& v) {
    return v.kind == op_kind::conv2d ? v.attr_int("out_channels") : v.attr_int("out_features");
}

// Trace output channel c of `vid` back to the stem that produces it. Concat
// re-bases the channel into the operand's space; elementwise joints share one
// channel space across operands, so any operand works and slot 0 is taken.
std::optional<std::pair<std::string, int64_t>> resolve_channel(const graph& g,
                                                               const std::string& vid,
                                                               int64_t c) {
    const vertex& v = g.at(vid);
    switch (v.kind) {
    case op_kind::conv2d:
    case op_kind::linear:
        return std::make_pair(vid, c);
    case op_kind::batchnorm2d:
    case op_kind::relu:
    case op_kind::maxpool2d:
    case op_kind::avgpool2d:
    case op_kind::add:
    case op_kind::mul:
        return resolve_channel(g, g.producers(vid)[0], c);
    case op_kind::concat: {
        const auto off = concat_offsets(g, vid);
        const auto prods = g.producers(vid);
        for (size_t s = 0; s + 1 < off.size(); ++s)
            if (c >= off[s] && c < off[s + 1])
                return resolve_channel(g, prods[s], c - off[s]);
        return std::nullopt;
    }
    default:
        return std::nullopt;
    }
}

// All groups with a direct edge into `sg`, walking through ungrouped vertices
// (concat, inputs) one level up. Used to pull producers out of the search
// space when sg's parameters cannot be split back onto their channels.
std::vector<int> upstream_groups(const graph& g, const node_grouping& grouping,
                                 const node_group& sg) {
    std::vector<int> out;
    std::vector<std::string> frontier = sg.members;
    std::set<std::string> seen(frontier.begin(), frontier.end());
    while (!frontier.empty()) {
        std::vector<std::string> next;
        for (const auto& m : frontier)
            for (const auto& p : g.producers(m)) {
                if (seen.count(p)) continue;
                seen.insert(p);
                if (const node_group* pg = grouping.group_of(p)) {
                    if (pg->id != sg.id) out.push_back(pg->id);
                } else if (g.at(p).kind != op_kind::input) {
                    next.push_back(p);
                }
            }
        frontier = std::move(next);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

} // namespace

bool node_group::contains(const std::string& v) const {
    return std::binary_search(members.begin(), members.end(), v);
}

const node_group* node_grouping::group_of(const std::string& vertex_id) const {
    for (const auto& ng : groups)
        if (ng.contains(vertex_id)) return &ng;
    return nullptr;
}

node_grouping build_pruning_dependency(const graph& g) {
    std::vector<std::string> ids;
    ids.reserve(g.vertices.size());
    for (const auto& [id, v] : g.vertices) ids.push_back(id);
    std::map<std::string, int> index;
    for (size_t i = 0; i < ids.size(); ++i) index[ids[i]] = (int)i;

    union_find uf(ids.size());
    for (const auto& e : g.edges) {
        const vertex& u = g.at(e.src);
        const vertex& v = g.at(e.dst);
        if (is_conn(v) && (is_conn(u) || is_stem(u))) uf.unite(index[e.src], index[e.dst]);
    }

    std::map<int, std::vector<std::string>> components;
    for (const auto& id : ids) {
        const vertex& v = g.at(id);
        if (is_conn(v) || is_stem(v)) components[uf.find(index[id])].push_back(id);
    }

    node_grouping grouping;
    for (auto& [root, members] : components) {
        node_group ng;
        ng.members = std::move(members); // already sorted: ids iterated in order
        for (const auto& m : ng.members)
            if (is_stem(g.at(m))) ng.stems.push_back(m);
        for (const auto& s : ng.stems) {
            const int64_t ch = stem_out_channels(g.at(s));
            if (ng.channels == 0)
                ng.channels = ch;
            else if (ng.channels != ch)
                fail(errc::consistency, "node group around '" + ng.members.front() +
                                            "': stems disagree on channel count");
        }
        for (const auto& m : ng.members) {
            const vertex& v = g.at(m);
            if (v.kind == op_kind::batchnorm2d && ng.channels != 0 &&
                v.attr_int("channels") != ng.channels)
                fail(errc::consistency,
                     "node group around '" + ng.members.front() +
                         "': batch norm '" + m + "' disagrees on channel count");
        }
        for (const auto& m : ng.members)
            if (g.at(m).kind == op_kind::unknown) ng.why_excluded = exclusion::contains_unknown;
        if (ng.why_excluded == exclusion::none)
            for (const auto& m : ng.members)
                for (const auto& c : g.consumers(m))
                    if (g.at(c).kind == op_kind::output)
                        ng.why_excluded = exclusion::adjacent_to_output;
        ng.prunable =
            !ng.stems.empty() && ng.channels > 0 && ng.why_excluded == exclusion::none;
        grouping.groups.push_back(std::move(ng));
    }

    std::sort(grouping.groups.begin(), grouping.groups.end(),
              [](const node_group& a, const node_group& b) {
                  return a.members.front() < b.members.front();
              });
    for (size_t i = 0; i < grouping.groups.size(); ++i) grouping.groups[i].id = (int)i;
    return grouping;
}

group_partition partition_pzig(const graph& g, node_grouping& grouping,
                               const param_store& ps) {
    // Split the parameters of stemless groups (normalizations that sit behind a
    // concat, so no stem was absorbed) back onto the groups producing each
    // channel. If any channel cannot be traced, neither the group nor anything
    // feeding it may be pruned: zeroing an upstream channel would leave this
    // group's bias term alive on it.
    std::map<int, std::map<int64_t, std::vector<group_slice>>> extra;
    std::map<std::string, int> stem_group;
    for (const auto& ng : grouping.groups)
        for (const auto& s : ng.stems) stem_group[s] = ng.id;
    auto demote = [&](int gid) {
        node_group& ng = grouping.groups[gid];
        ng.prunable = false;
        if (ng.why_excluded == exclusion::none)
            ng.why_excluded = exclusion::unresolved_params;
    };

    for (auto& sg : grouping.groups) {
        if (!sg.stems.empty()) continue;
        bool has_params = false;
        for (const auto& m : sg.members) has_params |= !g.at(m).params.empty();
        if (!has_params) continue;

        bool resolved = true;
        std::vector<std::tuple<int, int64_t, group_slice>> rows; // (group, channel, slice)
        for (const auto& m : sg.members) {
            const vertex& v = g.at(m);
            if (v.params.empty()) continue;
            const int64_t width = v.attr_int("channels");
            for (int64_t c = 0; c < width && resolved; ++c) {
                const auto hit = resolve_channel(g, g.producers(m)[0], c);
                if (!hit || !stem_group.count(hit->first)) {
                    resolved = false;
                    break;
                }
                const int gid = stem_group[hit->first];
                rows.emplace_back(gid, hit->second, group_slice{v.params[0], c, c + 1});
                rows.emplace_back(gid, hit->second, group_slice{v.params[1], c, c + 1});
            }
        }
        if (!resolved || sg.why_excluded != exclusion::none) {
            if (sg.why_excluded == exclusion::none) sg.why_excluded = exclusion::unresolved_params;
            for (int gid : upstream_groups(g, grouping, sg)) demote(gid);
            continue;
        }
        for (auto& [gid, ch, sl] : rows) extra[gid][ch].push_back(sl);
    }

    group_partition part;
    part.mode = group_partition::mode_t::prune;
    int next_id = 0;
    for (const auto& ng : grouping.groups) {
        if (!ng.prunable) continue;
        for (int64_t c = 0; c < ng.channels; ++c) {
            variable_group vg;
            vg.id = next_id++;
            vg.is_zig = true;
            vg.kind = "pzig";
            vg.structure_id = ng.id;
            vg.channel = (int)c;
            for (const auto& m : ng.members) {
                const vertex& v = g.at(m);
                if (v.params.empty()) continue;
                if (v.kind == op_kind::conv2d || v.kind == op_kind::linear) {
                    vg.slices.push_back({v.params[0], c, c + 1});
                    if (v.params.size() > 1) vg.slices.push_back({v.params[1], c, c + 1});
                } else if (v.kind == op_kind::batchnorm2d) {
                    vg.slices.push_back({v.params[0], c, c + 1});
                    vg.slices.push_back({v.params[1], c, c + 1});
                }
            }
            auto it = extra.find(ng.id);
            if (it != extra.end()) {
                auto jt = it->second.find(c);
                if (jt != it->second.end())
                    for (const auto& sl : jt->second) vg.slices.push_back(sl);
            }
            part.groups.push_back(std::move(vg));
        }
    }

    // Everything trainable that no search-space group claimed.
    std::map<std::string, std::vector<uint8_t>> covered;
    for (const auto& name : trainable_names(g))
        covered[name] = std::vector<uint8_t>((size_t)rows_of(ps.info(name).shape), 0);
    for (const auto& vg : part.groups)
        for (const auto& sl : vg.slices)
            for (int64_t r = sl.row_begin; r < sl.row_end; ++r) covered[sl.tensor][(size_t)r] = 1;
    variable_group comp;
    comp.id = next_id;
    comp.is_zig = false;
    comp.kind = "complement";
    comp.structure_id = -1;
    for (const auto& name : trainable_names(g)) {
        const auto& mask = covered[name];
        int64_t r = 0;
        const int64_t n = (int64_t)mask.size();
        while (r < n) {
            if (mask[(size_t)r]) {
                ++r;
                continue;
            }
            int64_t e = r;
            while (e < n && !mask[(size_t)e]) ++e;
            comp.slices.push_back({name, r, e});
            r = e;
        }
    }
    if (!comp.slices.empty()) part.groups.push_back(std::move(comp));

    resolve_ranges(part, ps);
    check_cover(part, g, ps);
    return part;
}

dot_decoration decorate_grouping(const node_grouping& grouping) {
    dot_decoration deco;
    for (const auto& ng : grouping.groups)
        for (const auto& m : ng.members) {
            deco.bucket_of[m] = ng.id;
            if (!ng.prunable) deco.dashed.insert(m);
        }
    return deco;
}

} // namespace oto
