#include "oto/graph_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace oto {

using nlohmann::json;

graph parse_manifest(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(errc::parse, std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("vertices") || !j.contains("edges"))
        fail(errc::parse, "manifest: missing vertices/edges");
    graph g;
    for (const json& jv : j["vertices"]) {
        vertex v;
        if (!jv.contains("id") || !jv.contains("op"))
            fail(errc::parse, "manifest: vertex without id/op");
        v.id = jv["id"].get<std::string>();
        v.op_tag = jv["op"].get<std::string>();
        v.kind = op_from_string(v.op_tag);
        if (jv.contains("attrs")) {
            for (auto it = jv["attrs"].begin(); it != jv["attrs"].end(); ++it) {
                std::vector<int64_t> vals;
                if (it.value().is_number_integer())
                    vals.push_back(it.value().get<int64_t>());
                else if (it.value().is_array())
                    for (const json& e : it.value()) vals.push_back(e.get<int64_t>());
                else
                    fail(errc::parse, "vertex '" + v.id + "': attr '" + it.key() +
                                          "' must be int or int array");
                v.attrs[it.key()] = vals;
            }
        }
        if (jv.contains("params"))
            for (const json& p : jv["params"]) v.params.push_back(p.get<std::string>());
        g.add_vertex(std::move(v));
    }
    for (const json& je : j["edges"]) {
        if (!je.is_array() || je.size() != 3)
            fail(errc::parse, "manifest: edge must be [src, dst, slot]");
        g.add_edge(je[0].get<std::string>(), je[1].get<std::string>(), je[2].get<int>());
    }
    // inputs/outputs lists are derived from vertex kinds on add; if the
    // manifest pins an order, honor it
    if (j.contains("inputs")) {
        std::vector<std::string> order = j["inputs"].get<std::vector<std::string>>();
        if (std::set<std::string>(order.begin(), order.end()) !=
            std::set<std::string>(g.inputs.begin(), g.inputs.end()))
            fail(errc::parse, "manifest: inputs list disagrees with Input vertices");
        g.inputs = order;
    }
    if (j.contains("outputs")) {
        std::vector<std::string> order = j["outputs"].get<std::vector<std::string>>();
        if (std::set<std::string>(order.begin(), order.end()) !=
            std::set<std::string>(g.outputs.begin(), g.outputs.end()))
            fail(errc::parse, "manifest: outputs list disagrees with Output vertices");
        g.outputs = order;
    }
    return g;
}

std::string serialize_manifest(const graph& g) {
    json j;
    j["version"] = 1;
    j["vertices"] = json::array();
    for (const auto& [id, v] : g.vertices) { // std::map: already sorted by id
        json jv;
        jv["id"] = v.id;
        jv["op"] = v.kind == op_kind::unknown ? v.op_tag : op_name(v.kind);
        if (!v.attrs.empty()) {
            json ja = json::object();
            for (const auto& [k, vals] : v.attrs) ja[k] = vals;
            jv["attrs"] = ja;
        }
        if (!v.params.empty()) jv["params"] = v.params;
        j["vertices"].push_back(jv);
    }
    std::vector<edge> es = g.edges;
    std::sort(es.begin(), es.end(), [](const edge& a, const edge& b) {
        return std::tie(a.src, a.dst, a.slot) < std::tie(b.src, b.dst, b.slot);
    });
    j["edges"] = json::array();
    for (const edge& e : es) j["edges"].push_back(json::array({e.src, e.dst, e.slot}));
    j["inputs"] = g.inputs;
    j["outputs"] = g.outputs;
    return j.dump(2) + "\n";
}

model parse_model(const std::string& manifest_text, const std::vector<uint8_t>& blob) {
    model m;
    m.g = parse_manifest(manifest_text);
    m.g.validate();
    m.params = read_blob(blob.data(), blob.size());
    validate_params(m.g, m.params);
    return m;
}

model load_model(const std::string& manifest_path, const std::string& blob_path) {
    std::ifstream f(manifest_path);
    if (!f) fail(errc::io, "cannot open '" + manifest_path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_model(ss.str(), read_file_bytes(blob_path));
}

void save_model(const model& m, const std::string& manifest_path,
                const std::string& blob_path) {
    std::ofstream f(manifest_path);
    if (!f) fail(errc::io, "cannot write '" + manifest_path + "'");
    f << serialize_manifest(m.g);
    write_file_bytes(blob_path, write_blob(m.params));
}

namespace {

// colorbrewer-ish pastels, cycled per bucket
const char* kPalette[] = {
    "#a6cee3", "#b2df8a", "#fb9a99", "#fdbf6f", "#cab2d6", "#ffff99",
    "#1f78b4", "#33a02c", "#e31a1c", "#ff7f00", "#6a3d9a", "#b15928",
};

std::string dot_label(const vertex& v) {
    std::ostringstream os;
    os << v.id << "\\n" << (v.kind == op_kind::unknown ? v.op_tag : op_name(v.kind));
    if (v.out_shape) os << " " << shape_str(*v.out_shape);
    return os.str();
}

} // namespace

std::string export_dot(const graph& g, const dot_decoration* deco) {
    std::ostringstream os;
    os << "digraph G {\n";
    os << "  rankdir=TB;\n";
    os << "  node [shape=box, style=filled, fillcolor=white, fontname=\"Helvetica\"];\n";
    for (const auto& [id, v] : g.vertices) {
        os << "  \"" << id << "\" [label=\"" << dot_label(v) << "\"";
        if (deco) {
            auto it = deco->bucket_of.find(id);
            if (it != deco->bucket_of.end()) {
                os << ", fillcolor=\"" << kPalette[it->second % 12] << "\"";
            }
            if (deco->dashed.count(id)) os << ", style=\"filled,dashed\"";
        }
        os << "];\n";
    }
    std::vector<edge> es = g.edges;
    std::sort(es.begin(), es.end(), [](const edge& a, const edge& b) {
        return std::tie(a.src, a.dst, a.slot) < std::tie(b.src, b.dst, b.slot);
    });
    for (const edge& e : es)
        os << "  \"" << e.src << "\" -> \"" << e.dst << "\";\n";
    os << "}\n";
    return os.str();
}

} // namespace oto
