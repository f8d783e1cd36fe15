#include "oto/erase_space.hpp"

#include <algorithm>
#include <deque>
#include <optional>

namespace oto {

namespace {

bool is_joint(const vertex& v) {
    return v.kind == op_kind::add || v.kind == op_kind::mul || v.kind == op_kind::concat;
}

// Which segment exclusively produces output channel c of `vid`? Accessories
// map channels one-to-one, concat re-bases into the operand block; an
// elementwise joint mixes operands so no single segment owns the channel.
std::optional<int> owner_segment(const graph& g, const erasing_graph& eg,
                                 const std::string& vid, int64_t c) {
    const vertex& v = g.at(vid);
    switch (v.kind) {
    case op_kind::conv2d:
    case op_kind::linear:
        return eg.seg_of.at(vid);
    case op_kind::batchnorm2d:
    case op_kind::relu:
    case op_kind::maxpool2d:
    case op_kind::avgpool2d:
        return owner_segment(g, eg, g.producers(vid)[0], c);
    case op_kind::concat: {
        const auto off = concat_offsets(g, vid);
        const auto prods = g.producers(vid);
        for (size_t s = 0; s + 1 < off.size(); ++s)
            if (c >= off[s] && c < off[s + 1])
                return owner_segment(g, eg, prods[s], c - off[s]);
        return std::nullopt;
    }
    default:
        return std::nullopt;
    }
}

} // namespace

erasing_graph build_erasing_dependency(const graph& g) {
    std::map<std::string, int> out_degree, in_degree;
    for (const auto& e : g.edges) {
        out_degree[e.src]++;
        in_degree[e.dst]++;
    }

    erasing_graph eg;
    std::set<std::string> visited;
    std::deque<std::string> queue;
    for (const auto& in : g.inputs)
        for (const auto& c : g.consumers(in)) queue.push_back(c);

    while (!queue.empty()) {
        std::string cur = queue.front();
        queue.pop_front();
        if (visited.count(cur) || g.at(cur).kind == op_kind::output) continue;

        segment seg;
        seg.id = (int)eg.segments.size();
        for (;;) {
            visited.insert(cur);
            seg.members.push_back(cur);
            eg.seg_of[cur] = seg.id;
            const auto next = g.consumers(cur);
            if (next.size() != 1) break;
            const vertex& nv = g.at(next[0]);
            if (nv.kind == op_kind::output || is_joint(nv) || in_degree[next[0]] > 1 ||
                visited.count(next[0]))
                break;
            cur = next[0];
        }
        for (const auto& c : g.consumers(cur))
            if (g.at(c).kind != op_kind::output && !visited.count(c)) queue.push_back(c);

        for (const auto& m : seg.members) {
            for (const auto& p : g.producers(m))
                if (g.at(p).kind == op_kind::input) seg.is_input = true;
            for (const auto& c : g.consumers(m))
                if (g.at(c).kind == op_kind::output) seg.is_output = true;
        }
        bool has_params = false, joint_exit = false, mul_exit = false, has_unknown = false;
        for (const auto& m : seg.members) {
            const vertex& v = g.at(m);
            has_params |= !v.params.empty();
            has_unknown |= v.kind == op_kind::unknown;
            for (const auto& c : g.consumers(m)) {
                if (eg.seg_of.count(c) && eg.seg_of[c] == seg.id) continue;
                // A zeroed operand vanishes from a sum and from a concat block
                // sliced away downstream, but it annihilates a product, so Mul
                // operands are not removal candidates.
                if (g.at(c).kind == op_kind::mul) mul_exit = true;
                if (is_joint(g.at(c))) joint_exit = true;
            }
        }
        // A joint exit makes the segment a removal candidate even when another
        // exit feeds a plain consumer: that consumer would be orphaned, which
        // the search-time validity check rejects unless the consumer's own
        // segment is already gone. Residual tails (a bridge conv feeding both
        // its transform branch and the rejoining Add) depend on this split of
        // responsibilities between candidacy and validity.
        seg.erasable = has_params && joint_exit && !mul_exit && !has_unknown && !seg.is_output;
        eg.segments.push_back(std::move(seg));
    }

    for (const auto& [id, v] : g.vertices) {
        if (v.kind == op_kind::input || v.kind == op_kind::output) continue;
        if (!eg.seg_of.count(id))
            fail(errc::consistency, "vertex '" + id + "' unreachable from the graph inputs");
    }

    for (const auto& e : g.edges) {
        auto a = eg.seg_of.find(e.src);
        auto b = eg.seg_of.find(e.dst);
        if (a == eg.seg_of.end() || b == eg.seg_of.end() || a->second == b->second) continue;
        eg.edges.emplace_back(a->second, b->second);
    }
    std::sort(eg.edges.begin(), eg.edges.end());
    eg.edges.erase(std::unique(eg.edges.begin(), eg.edges.end()), eg.edges.end());
    return eg;
}

bool erasing_valid(const graph& g, const erasing_graph& eg, const std::set<int>& removed) {
    std::vector<uint8_t> alive(eg.segments.size(), 1);
    for (int r : removed) {
        if (r < 0 || r >= (int)eg.segments.size())
            fail(errc::consistency, "no segment with id " + std::to_string(r));
        alive[(size_t)r] = 0;
    }

    // Output segments must stay reachable from input segments.
    std::vector<uint8_t> reach(eg.segments.size(), 0);
    std::deque<int> queue;
    for (const auto& s : eg.segments)
        if (alive[(size_t)s.id] && s.is_input) {
            reach[(size_t)s.id] = 1;
            queue.push_back(s.id);
        }
    while (!queue.empty()) {
        int s = queue.front();
        queue.pop_front();
        for (const auto& [a, b] : eg.edges)
            if (a == s && alive[(size_t)b] && !reach[(size_t)b]) {
                reach[(size_t)b] = 1;
                queue.push_back(b);
            }
    }
    for (const auto& s : eg.segments)
        if (alive[(size_t)s.id] && s.is_output && !reach[(size_t)s.id]) return false;

    // Every surviving vertex must keep at least one live producer: a starved
    // joint has nothing to combine, and an orphaned plain consumer would sit
    // in the subnetwork with no input at all.
    for (const auto& s : eg.segments) {
        if (!alive[(size_t)s.id]) continue;
        for (const auto& m : s.members) {
            const auto prods = g.producers(m);
            if (prods.empty()) continue;
            int live_in = 0;
            for (const auto& p : prods) {
                if (g.at(p).kind == op_kind::input)
                    ++live_in;
                else if (alive[(size_t)eg.seg_of.at(p)])
                    ++live_in;
            }
            if (live_in == 0) return false;
        }
    }
    return true;
}

group_partition partition_ezig(const graph& g, const erasing_graph& eg,
                               const param_store& ps) {
    group_partition part;
    part.mode = group_partition::mode_t::erase;
    std::map<int, size_t> group_of_segment;
    int next_id = 0;
    for (const auto& s : eg.segments) {
        if (!s.erasable) continue;
        variable_group vg;
        vg.id = next_id++;
        vg.is_zig = true;
        vg.kind = "ezig";
        vg.structure_id = s.id;
        for (const auto& m : s.members) {
            const vertex& v = g.at(m);
            const size_t trainable = v.kind == op_kind::batchnorm2d ? 2 : v.params.size();
            for (size_t i = 0; i < trainable; ++i)
                vg.slices.push_back({v.params[i], 0, rows_of(ps.info(v.params[i]).shape)});
        }
        group_of_segment[s.id] = part.groups.size();
        part.groups.push_back(std::move(vg));
    }

    // A normalization that survives a removed concat operand would re-bias the
    // dead block, so its per-block rows belong to the producing segment's
    // group: zeroed together, removed together.
    for (const auto& [vid, sid] : eg.seg_of) {
        const vertex& v = g.at(vid);
        if (v.kind != op_kind::batchnorm2d || eg.at(sid).erasable) continue;
        const int64_t width = v.attr_int("channels");
        for (int64_t c = 0; c < width; ++c) {
            const auto owner = owner_segment(g, eg, g.producers(vid)[0], c);
            if (!owner || !eg.at(*owner).erasable) continue;
            auto& vg = part.groups[group_of_segment.at(*owner)];
            vg.slices.push_back({v.params[0], c, c + 1});
            vg.slices.push_back({v.params[1], c, c + 1});
        }
    }

    std::map<std::string, std::vector<uint8_t>> covered;
    for (const auto& name : trainable_names(g))
        covered[name] = std::vector<uint8_t>((size_t)rows_of(ps.info(name).shape), 0);
    for (const auto& vg : part.groups)
        for (const auto& sl : vg.slices)
            for (int64_t r = sl.row_begin; r < sl.row_end; ++r)
                covered[sl.tensor][(size_t)r] = 1;
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

dot_decoration decorate_segments(const erasing_graph& eg) {
    dot_decoration deco;
    for (const auto& s : eg.segments)
        for (const auto& m : s.members) {
            deco.bucket_of[m] = s.id;
            if (!s.erasable) deco.dashed.insert(m);
        }
    return deco;
}

} // namespace oto
