#include "oto/partition.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace oto {

using nlohmann::json;

int64_t variable_group::size() const {
    int64_t n = 0;
    for (const auto& [b, e] : ranges) n += e - b;
    return n;
}

int group_partition::zig_count() const {
    int n = 0;
    for (const auto& vg : groups) n += vg.is_zig ? 1 : 0;
    return n;
}

const variable_group& group_partition::at(int id) const {
    for (const auto& vg : groups)
        if (vg.id == id) return vg;
    fail(errc::consistency, "no variable group with id " + std::to_string(id));
}

int64_t rows_of(const shape_t& s) { return s.empty() ? 0 : s[0]; }

int64_t row_size_of(const shape_t& s) {
    int64_t n = 1;
    for (size_t i = 1; i < s.size(); ++i) n *= s[i];
    return n;
}

void resolve_ranges(group_partition& part, const param_store& ps) {
    for (auto& vg : part.groups) {
        vg.ranges.clear();
        for (const auto& sl : vg.slices) {
            const auto& e = ps.info(sl.tensor);
            if (sl.row_begin < 0 || sl.row_end > rows_of(e.shape) ||
                sl.row_begin >= sl.row_end)
                fail(errc::consistency, "group " + std::to_string(vg.id) +
                                            ": slice out of range for '" + sl.tensor + "'");
            const int64_t rs = row_size_of(e.shape);
            vg.ranges.emplace_back(e.offset + sl.row_begin * rs, e.offset + sl.row_end * rs);
        }
        std::sort(vg.ranges.begin(), vg.ranges.end());
    }
}

void check_cover(const group_partition& part, const graph& g, const param_store& ps) {
    std::vector<uint8_t> seen(ps.arena().size(), 0);
    for (const auto& vg : part.groups)
        for (const auto& [b, e] : vg.ranges)
            for (int64_t i = b; i < e; ++i) {
                if (seen[i])
                    fail(errc::consistency,
                         "partition: scalar covered twice (group " + std::to_string(vg.id) +
                             ")");
                seen[i] = 1;
            }
    for (const std::string& name : trainable_names(g)) {
        const auto& e = ps.info(name);
        for (int64_t i = e.offset; i < e.offset + e.size; ++i)
            if (!seen[i])
                fail(errc::consistency, "partition: trainable scalar of '" + name +
                                            "' not covered by any group");
    }
}

double group_dot(const variable_group& vg, const std::vector<float>& a,
                 const std::vector<float>& b) {
    double acc = 0.0;
    for (const auto& [lo, hi] : vg.ranges)
        for (int64_t i = lo; i < hi; ++i) acc += (double)a[i] * (double)b[i];
    return acc;
}

double group_norm(const variable_group& vg, const std::vector<float>& a) {
    double acc = 0.0;
    for (const auto& [lo, hi] : vg.ranges)
        for (int64_t i = lo; i < hi; ++i) acc += (double)a[i] * (double)a[i];
    return std::sqrt(acc);
}

void group_zero(const variable_group& vg, std::vector<float>& a) {
    for (const auto& [lo, hi] : vg.ranges)
        for (int64_t i = lo; i < hi; ++i) a[i] = 0.0f;
}

bool group_is_zero(const variable_group& vg, const std::vector<float>& a) {
    for (const auto& [lo, hi] : vg.ranges)
        for (int64_t i = lo; i < hi; ++i)
            if (a[i] != 0.0f) return false;
    return true;
}

std::string serialize_partition(const group_partition& part) {
    json j;
    j["mode"] = part.mode == group_partition::mode_t::prune ? "prune" : "erase";
    j["groups"] = json::array();
    for (const auto& vg : part.groups) {
        json jg;
        jg["id"] = vg.id;
        jg["is_zig"] = vg.is_zig;
        jg["kind"] = vg.kind;
        jg["structure"] = vg.structure_id;
        if (vg.channel >= 0) jg["channel"] = vg.channel;
        json js = json::array();
        for (const auto& sl : vg.slices)
            js.push_back(json::array({sl.tensor, sl.row_begin, sl.row_end}));
        jg["slices"] = js;
        j["groups"].push_back(jg);
    }
    return j.dump(2) + "\n";
}

group_partition parse_partition(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(errc::parse, std::string("partition is not valid JSON: ") + e.what());
    }
    group_partition part;
    part.mode = j.at("mode").get<std::string>() == "erase" ? group_partition::mode_t::erase
                                                           : group_partition::mode_t::prune;
    for (const json& jg : j.at("groups")) {
        variable_group vg;
        vg.id = jg.at("id").get<int>();
        vg.is_zig = jg.at("is_zig").get<bool>();
        vg.kind = jg.at("kind").get<std::string>();
        vg.structure_id = jg.at("structure").get<int>();
        if (jg.contains("channel")) vg.channel = jg.at("channel").get<int>();
        for (const json& js : jg.at("slices"))
            vg.slices.push_back(
                {js.at(0).get<std::string>(), js.at(1).get<int64_t>(), js.at(2).get<int64_t>()});
        part.groups.push_back(std::move(vg));
    }
    return part;
}

} // namespace oto
