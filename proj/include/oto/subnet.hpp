#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "oto/erase_space.hpp"
#include "oto/graph_io.hpp"
#include "oto/partition.hpp"
#include "oto/prune_space.hpp"

namespace oto {

struct tensor_origin {
    std::string source;             // tensor name in the full model
    std::vector<int64_t> kept_rows; // axis-0 indices that survived
    std::vector<int64_t> kept_cols; // axis-1 indices (conv/linear weights)
};

struct subnetwork {
    model net;
    std::map<std::string, tensor_origin> provenance;
    std::vector<int> removed; // variable-group ids (prune) / segment ids (erase)
};

// Surgery is driven purely by the partition's structure references: a group id
// names (node group, channel) or a segment, and index sets follow from that.
// Values are copied, never recomputed, so kept parameters stay bit-identical.
// Both constructors require every listed group to be exactly zero in `full`.

// Removes the listed PZIG channels: filter rows, bias and normalization
// scalars across each node group, then the matching input columns of every
// consumer stem (concat offsets and flatten blocks are mapped through). The
// graph topology is unchanged; attrs shrink. A vertex that would lose all
// input or all output channels raises a degenerate-layer error.
subnetwork construct_pruned(const model& full, const node_grouping& grouping,
                            const group_partition& part, const std::vector<int>& redundant);

// Deletes the segments behind the listed EZIGs, slices consumers of shrunken
// concats (weight columns, normalization rows), then removes to a fixed point
// isolated vertices and single-input Concat/Add/Mul (spliced into pass-through
// edges, consumer slot numbering preserved). The result re-validates and
// re-infers shapes.
subnetwork construct_erased(const model& full, const erasing_graph& eg,
                            const group_partition& part, const std::vector<int>& redundant);

struct equivalence_report {
    double max_abs_diff = 0.0;
    bool pass = false;
    std::string detail;
};

// Both models run in eval mode on n seeded random inputs; pass iff every
// output matches within tol. Arity or shape mismatches fail with diagnostics
// instead of throwing.
equivalence_report verify_equivalence(const model& full, const model& sub, int n, double tol,
                                      uint64_t seed);

struct op_cost {
    std::string id;
    std::string op;
    int64_t macs = 0;
    int64_t params = 0;
};

struct cost_report {
    std::vector<op_cost> per_op;
    int64_t macs = 0;
    int64_t params = 0;
};

// Multiply-accumulate counts per sample (batch 1) for conv/linear; params
// count every stored scalar, including normalization running statistics.
cost_report count_cost(const model& m);

std::string surgery_report(const model& full, const subnetwork& sub);
std::string provenance_json(const subnetwork& sub);

} // namespace oto
