#pragma once

#include <set>
#include <string>

#include "oto/graph.hpp"
#include "oto/params.hpp"

namespace oto {

struct model {
    graph g;
    param_store params;
};

// Manifest schema (JSON):
//   { "version": 1,
//     "vertices": [ {"id": ..., "op": ..., "attrs": {...}, "params": [...]}, ... ],
//     "edges":    [ [src, dst, slot], ... ],
//     "inputs":   [...], "outputs": [...] }
// Attr values are ints or int arrays; Input vertices carry "shape" (without
// the batch dimension). Unrecognized op tags parse as Unknown with the tag
// preserved.
graph parse_manifest(const std::string& json_text);
std::string serialize_manifest(const graph& g); // canonical: sorted ids, sorted edges

// Manifest + blob, cross-validated (validate() + validate_params()).
model parse_model(const std::string& manifest_text, const std::vector<uint8_t>& blob);
model load_model(const std::string& manifest_path, const std::string& blob_path);
void save_model(const model& m, const std::string& manifest_path,
                const std::string& blob_path);

// Graphviz export. Vertices in the same bucket share a fill color; dashed
// vertices mark redundant structures. Node ordering is sorted by id, edge
// ordering by (src, dst, slot), so output is byte-stable.
struct dot_decoration {
    std::map<std::string, int> bucket_of;
    std::set<std::string> dashed;
};
std::string export_dot(const graph& g, const dot_decoration* deco = nullptr);

} // namespace oto
