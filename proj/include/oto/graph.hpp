#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oto/error.hpp"

namespace oto {

using shape_t = std::vector<int64_t>;

std::string shape_str(const shape_t& s);
int64_t shape_numel(const shape_t& s);

enum class op_kind {
    input,
    output,
    conv2d,
    linear,
    batchnorm2d,
    relu,
    maxpool2d,
    avgpool2d,
    add,
    mul,
    concat,
    flatten,
    unknown,
};

const char* op_name(op_kind k);
op_kind op_from_string(const std::string& tag); // unrecognized tags map to unknown

// Role drives both dependency analyses. Stems own pairwise (in/out indexed)
// parameters, accessories follow the stem they normalize/transform, joints
// split into shape-dependent (operands share one channel space) and
// shape-independent (operands keep their own channel spaces).
enum class vertex_role { stem, joint_sd, joint_sid, accessory, unknown };

const char* role_name(vertex_role r);
vertex_role classify_vertex(op_kind k);

// Integer attributes only; pairs are stored as two-element vectors.
// conv2d/pools: kernel, stride, padding (pairs), conv also in_channels/out_channels.
// linear: in_features/out_features. batchnorm2d: channels. concat: axis.
using attrs_t = std::map<std::string, std::vector<int64_t>>;

struct vertex {
    std::string id;
    op_kind kind = op_kind::unknown;
    std::string op_tag;               // original tag, kept verbatim for unknown ops
    attrs_t attrs;
    std::vector<std::string> params;  // tensor names, see params.hpp for conventions
    std::optional<shape_t> out_shape; // filled by infer_shapes

    int64_t attr_int(const std::string& key) const;
    std::pair<int64_t, int64_t> attr_pair(const std::string& key) const;
    bool has_attr(const std::string& key) const { return attrs.count(key) != 0; }
};

struct edge {
    std::string src;
    std::string dst;
    int slot = 0; // operand position at dst, dense 0..k-1
};

class graph {
public:
    std::map<std::string, vertex> vertices;
    std::vector<edge> edges;
    std::vector<std::string> inputs;  // ids of op_kind::input vertices
    std::vector<std::string> outputs; // ids of op_kind::output vertices

    void add_vertex(vertex v);
    void add_edge(const std::string& src, const std::string& dst, int slot);

    const vertex& at(const std::string& id) const;
    vertex& at(const std::string& id);
    bool has(const std::string& id) const { return vertices.count(id) != 0; }

    // Producers in slot order; consumers sorted by (id, slot).
    std::vector<std::string> producers(const std::string& id) const;
    std::vector<std::string> consumers(const std::string& id) const;
    const edge* in_edge(const std::string& dst, int slot) const;

    // Acyclic, ids resolve, slots dense, inputs/outputs wired correctly,
    // every non-input has >=1 incoming and every non-output >=1 outgoing edge.
    void validate() const;

    // Kahn's algorithm, ready set keyed by ascending id: one canonical order.
    std::vector<std::string> topological_order() const;
};

// Fills vertex::out_shape for every vertex. input_shapes maps input-vertex id
// to a full shape, (N,C,H,W) or (N,F). Idempotent; throws error(errc::shape)
// with the offending vertex named on any mismatch.
void infer_shapes(graph& g, const std::map<std::string, shape_t>& input_shapes);

// Input shapes recorded in the manifest ("shape" attr on input vertices,
// without the batch dimension), expanded with the given batch size.
std::map<std::string, shape_t> manifest_input_shapes(const graph& g, int64_t batch);

// Channel offset of each operand of a concat vertex, in slot order, plus the
// total. Requires producer shapes to be inferred.
std::vector<int64_t> concat_offsets(const graph& g, const std::string& concat_id);

} // namespace oto
