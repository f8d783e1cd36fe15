#include "oto/graph.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

namespace oto {

std::string shape_str(const shape_t& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

int64_t shape_numel(const shape_t& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

const char* op_name(op_kind k) {
    switch (k) {
        case op_kind::input: return "Input";
        case op_kind::output: return "Output";
        case op_kind::conv2d: return "Conv2d";
        case op_kind::linear: return "Linear";
        case op_kind::batchnorm2d: return "BatchNorm2d";
        case op_kind::relu: return "ReLU";
        case op_kind::maxpool2d: return "MaxPool2d";
        case op_kind::avgpool2d: return "AvgPool2d";
        case op_kind::add: return "Add";
        case op_kind::mul: return "Mul";
        case op_kind::concat: return "Concat";
        case op_kind::flatten: return "Flatten";
        case op_kind::unknown: return "Unknown";
    }
    return "Unknown";
}

op_kind op_from_string(const std::string& tag) {
    static const std::map<std::string, op_kind> table = {
        {"Input", op_kind::input},       {"Output", op_kind::output},
        {"Conv2d", op_kind::conv2d},     {"Linear", op_kind::linear},
        {"BatchNorm2d", op_kind::batchnorm2d}, {"ReLU", op_kind::relu},
        {"MaxPool2d", op_kind::maxpool2d},     {"AvgPool2d", op_kind::avgpool2d},
        {"Add", op_kind::add},           {"Mul", op_kind::mul},
        {"Concat", op_kind::concat},     {"Flatten", op_kind::flatten},
    };
    auto it = table.find(tag);
    return it == table.end() ? op_kind::unknown : it->second;
}

const char* role_name(vertex_role r) {
    switch (r) {
        case vertex_role::stem: return "stem";
        case vertex_role::joint_sd: return "joint_sd";
        case vertex_role::joint_sid: return "joint_sid";
        case vertex_role::accessory: return "accessory";
        case vertex_role::unknown: return "unknown";
    }
    return "unknown";
}

vertex_role classify_vertex(op_kind k) {
    switch (k) {
        case op_kind::conv2d:
        case op_kind::linear:
            return vertex_role::stem;
        case op_kind::add:
        case op_kind::mul:
            return vertex_role::joint_sd;
        case op_kind::concat:
            return vertex_role::joint_sid;
        case op_kind::batchnorm2d:
        case op_kind::relu:
        case op_kind::maxpool2d:
        case op_kind::avgpool2d:
        case op_kind::flatten:
            return vertex_role::accessory;
        case op_kind::input:
        case op_kind::output:
        case op_kind::unknown:
            return vertex_role::unknown;
    }
    return vertex_role::unknown;
}

int64_t vertex::attr_int(const std::string& key) const {
    auto it = attrs.find(key);
    if (it == attrs.end() || it->second.empty())
        fail(errc::shape, "vertex '" + id + "': missing attr '" + key + "'");
    return it->second[0];
}

std::pair<int64_t, int64_t> vertex::attr_pair(const std::string& key) const {
    auto it = attrs.find(key);
    if (it == attrs.end() || it->second.empty())
        fail(errc::shape, "vertex '" + id + "': missing attr '" + key + "'");
    if (it->second.size() == 1) return {it->second[0], it->second[0]};
    return {it->second[0], it->second[1]};
}

void graph::add_vertex(vertex v) {
    if (vertices.count(v.id))
        fail(errc::parse, "duplicate vertex id '" + v.id + "'");
    if (v.kind == op_kind::input) inputs.push_back(v.id);
    if (v.kind == op_kind::output) outputs.push_back(v.id);
    vertices.emplace(v.id, std::move(v));
}

void graph::add_edge(const std::string& src, const std::string& dst, int slot) {
    edges.push_back({src, dst, slot});
}

const vertex& graph::at(const std::string& id) const {
    auto it = vertices.find(id);
    if (it == vertices.end()) fail(errc::validity, "no vertex with id '" + id + "'");
    return it->second;
}

vertex& graph::at(const std::string& id) {
    auto it = vertices.find(id);
    if (it == vertices.end()) fail(errc::validity, "no vertex with id '" + id + "'");
    return it->second;
}

std::vector<std::string> graph::producers(const std::string& id) const {
    std::vector<std::pair<int, std::string>> slots;
    for (const auto& e : edges)
        if (e.dst == id) slots.emplace_back(e.slot, e.src);
    std::sort(slots.begin(), slots.end());
    std::vector<std::string> out;
    out.reserve(slots.size());
    for (auto& [slot, src] : slots) out.push_back(src);
    return out;
}

std::vector<std::string> graph::consumers(const std::string& id) const {
    std::vector<std::pair<std::string, int>> hits;
    for (const auto& e : edges)
        if (e.src == id) hits.emplace_back(e.dst, e.slot);
    std::sort(hits.begin(), hits.end());
    std::vector<std::string> out;
    out.reserve(hits.size());
    for (auto& [dst, slot] : hits) out.push_back(dst);
    return out;
}

const edge* graph::in_edge(const std::string& dst, int slot) const {
    for (const auto& e : edges)
        if (e.dst == dst && e.slot == slot) return &e;
    return nullptr;
}

void graph::validate() const {
    for (const auto& e : edges) {
        if (!vertices.count(e.src))
            fail(errc::parse, "edge references missing vertex '" + e.src + "'");
        if (!vertices.count(e.dst))
            fail(errc::parse, "edge references missing vertex '" + e.dst + "'");
    }
    std::map<std::string, std::set<int>> in_slots;
    std::map<std::string, int> out_deg;
    for (const auto& e : edges) {
        if (!in_slots[e.dst].insert(e.slot).second)
            fail(errc::validity, "vertex '" + e.dst + "': duplicate operand slot " +
                                     std::to_string(e.slot));
        out_deg[e.src]++;
    }
    for (const auto& [id, slots] : in_slots) {
        int want = 0;
        for (int s : slots)
            if (s != want++)
                fail(errc::validity, "vertex '" + id + "': operand slots not dense 0..k-1");
    }
    for (const auto& [id, v] : vertices) {
        bool has_in = in_slots.count(id) != 0;
        bool has_out = out_deg.count(id) != 0;
        if (v.kind == op_kind::input) {
            if (has_in) fail(errc::validity, "input vertex '" + id + "' has incoming edges");
            if (!has_out) fail(errc::validity, "input vertex '" + id + "' is unused");
        } else if (!has_in) {
            fail(errc::validity, "vertex '" + id + "' has no incoming edge");
        }
        if (v.kind == op_kind::output) {
            if (has_out) fail(errc::validity, "output vertex '" + id + "' has outgoing edges");
        } else if (!has_out) {
            fail(errc::validity, "vertex '" + id + "' has no outgoing edge");
        }
    }
    for (const std::string& id : inputs)
        if (at(id).kind != op_kind::input)
            fail(errc::validity, "inputs list entry '" + id + "' is not an Input vertex");
    for (const std::string& id : outputs)
        if (at(id).kind != op_kind::output)
            fail(errc::validity, "outputs list entry '" + id + "' is not an Output vertex");
    // cycle check falls out of the topological sort
    topological_order();
}

std::vector<std::string> graph::topological_order() const {
    std::map<std::string, int> in_deg;
    for (const auto& [id, v] : vertices) in_deg[id] = 0;
    for (const auto& e : edges) in_deg[e.dst]++;

    // min-heap on id: ties broken by ascending id, so the order is canonical
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (const auto& [id, deg] : in_deg)
        if (deg == 0) ready.push(id);

    std::vector<std::string> order;
    order.reserve(vertices.size());
    while (!ready.empty()) {
        std::string id = ready.top();
        ready.pop();
        order.push_back(id);
        for (const auto& e : edges)
            if (e.src == id && --in_deg[e.dst] == 0) ready.push(e.dst);
    }
    if (order.size() != vertices.size())
        fail(errc::validity, "graph contains a cycle");
    return order;
}

namespace {

shape_t pool_out_shape(const vertex& v, const shape_t& in) {
    if (in.size() != 4)
        fail(errc::shape, "vertex '" + v.id + "': pooling expects rank-4 input, got " +
                              shape_str(in));
    auto [kh, kw] = v.attr_pair("kernel");
    auto [sh, sw] = v.attr_pair("stride");
    int64_t ph = 0, pw = 0;
    if (v.has_attr("padding")) std::tie(ph, pw) = v.attr_pair("padding");
    int64_t oh = (in[2] + 2 * ph - kh) / sh + 1;
    int64_t ow = (in[3] + 2 * pw - kw) / sw + 1;
    if (oh <= 0 || ow <= 0)
        fail(errc::shape, "vertex '" + v.id + "': non-positive spatial size " +
                              std::to_string(oh) + "x" + std::to_string(ow) +
                              " after pooling input " + shape_str(in));
    return {in[0], in[1], oh, ow};
}

} // namespace

void infer_shapes(graph& g, const std::map<std::string, shape_t>& input_shapes) {
    for (const std::string& id : g.topological_order()) {
        vertex& v = g.at(id);
        std::vector<shape_t> in;
        for (const std::string& p : g.producers(id)) {
            const auto& os = g.at(p).out_shape;
            if (!os) fail(errc::shape, "vertex '" + id + "': producer '" + p + "' has no shape");
            in.push_back(*os);
        }
        switch (v.kind) {
            case op_kind::input: {
                auto it = input_shapes.find(id);
                if (it == input_shapes.end())
                    fail(errc::shape, "no input shape given for '" + id + "'");
                v.out_shape = it->second;
                break;
            }
            case op_kind::output:
                v.out_shape = in.at(0);
                break;
            case op_kind::conv2d: {
                const shape_t& x = in.at(0);
                if (x.size() != 4)
                    fail(errc::shape, "vertex '" + id + "': Conv2d expects rank-4 input, got " +
                                          shape_str(x));
                int64_t ic = v.attr_int("in_channels");
                int64_t oc = v.attr_int("out_channels");
                if (x[1] != ic)
                    fail(errc::shape, "vertex '" + id + "': input has " + std::to_string(x[1]) +
                                          " channels, attr in_channels=" + std::to_string(ic));
                auto [kh, kw] = v.attr_pair("kernel");
                auto [sh, sw] = v.attr_pair("stride");
                int64_t ph = 0, pw = 0;
                if (v.has_attr("padding")) std::tie(ph, pw) = v.attr_pair("padding");
                int64_t oh = (x[2] + 2 * ph - kh) / sh + 1;
                int64_t ow = (x[3] + 2 * pw - kw) / sw + 1;
                if (oh <= 0 || ow <= 0)
                    fail(errc::shape, "vertex '" + id + "': non-positive conv output " +
                                          std::to_string(oh) + "x" + std::to_string(ow));
                v.out_shape = shape_t{x[0], oc, oh, ow};
                break;
            }
            case op_kind::linear: {
                const shape_t& x = in.at(0);
                if (x.size() != 2)
                    fail(errc::shape, "vertex '" + id + "': Linear expects rank-2 input, got " +
                                          shape_str(x));
                int64_t fi = v.attr_int("in_features");
                int64_t fo = v.attr_int("out_features");
                if (x[1] != fi)
                    fail(errc::shape, "vertex '" + id + "': input has " + std::to_string(x[1]) +
                                          " features, attr in_features=" + std::to_string(fi));
                v.out_shape = shape_t{x[0], fo};
                break;
            }
            case op_kind::batchnorm2d: {
                const shape_t& x = in.at(0);
                if (x.size() != 4)
                    fail(errc::shape, "vertex '" + id + "': BatchNorm2d expects rank-4 input");
                if (x[1] != v.attr_int("channels"))
                    fail(errc::shape, "vertex '" + id + "': input has " + std::to_string(x[1]) +
                                          " channels, attr channels=" +
                                          std::to_string(v.attr_int("channels")));
                v.out_shape = x;
                break;
            }
            case op_kind::relu:
                v.out_shape = in.at(0);
                break;
            case op_kind::maxpool2d:
            case op_kind::avgpool2d:
                v.out_shape = pool_out_shape(v, in.at(0));
                break;
            case op_kind::flatten: {
                const shape_t& x = in.at(0);
                v.out_shape = shape_t{x[0], shape_numel(x) / x[0]};
                break;
            }
            case op_kind::add:
            case op_kind::mul: {
                if (in.size() < 2)
                    fail(errc::shape, "vertex '" + id + "': needs >=2 operands");
                for (size_t i = 1; i < in.size(); ++i)
                    if (in[i] != in[0])
                        fail(errc::shape, "vertex '" + id + "': operand shapes differ, " +
                                              shape_str(in[0]) + " vs " + shape_str(in[i]));
                v.out_shape = in[0];
                break;
            }
            case op_kind::concat: {
                if (in.empty()) fail(errc::shape, "vertex '" + id + "': no operands");
                int64_t axis = v.has_attr("axis") ? v.attr_int("axis") : 1;
                shape_t out = in[0];
                for (size_t i = 1; i < in.size(); ++i) {
                    if (in[i].size() != out.size())
                        fail(errc::shape, "vertex '" + id + "': operand ranks differ");
                    for (size_t d = 0; d < out.size(); ++d) {
                        if ((int64_t)d == axis) continue;
                        if (in[i][d] != out[d])
                            fail(errc::shape, "vertex '" + id +
                                                  "': operands differ off the concat axis, " +
                                                  shape_str(in[0]) + " vs " + shape_str(in[i]));
                    }
                    out[axis] += in[i][axis];
                }
                v.out_shape = out;
                break;
            }
            case op_kind::unknown:
                // pass-through guess keeps analysis usable; execution rejects it
                v.out_shape = in.empty() ? shape_t{} : in.at(0);
                break;
        }
    }
}

std::map<std::string, shape_t> manifest_input_shapes(const graph& g, int64_t batch) {
    std::map<std::string, shape_t> out;
    for (const std::string& id : g.inputs) {
        const vertex& v = g.at(id);
        auto it = v.attrs.find("shape");
        if (it == v.attrs.end())
            fail(errc::shape, "input vertex '" + id + "' has no shape attr");
        shape_t s{batch};
        for (int64_t d : it->second) s.push_back(d);
        out[id] = s;
    }
    return out;
}

std::vector<int64_t> concat_offsets(const graph& g, const std::string& concat_id) {
    const vertex& v = g.at(concat_id);
    if (v.kind != op_kind::concat)
        fail(errc::validity, "vertex '" + concat_id + "' is not a Concat");
    std::vector<int64_t> offsets;
    int64_t off = 0;
    for (const std::string& p : g.producers(concat_id)) {
        offsets.push_back(off);
        const auto& os = g.at(p).out_shape;
        if (!os) fail(errc::shape, "concat '" + concat_id + "': producer shape unknown");
        off += (*os)[1];
    }
    offsets.push_back(off);
    return offsets;
}

} // namespace oto
