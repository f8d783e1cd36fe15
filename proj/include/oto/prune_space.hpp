#pragma once

#include <string>
#include <vector>

#include "oto/graph.hpp"
#include "oto/graph_io.hpp"
#include "oto/params.hpp"
#include "oto/partition.hpp"

namespace oto {

// Why a group may be kept out of the prunable search space.
enum class exclusion { none, adjacent_to_output, contains_unknown, unresolved_params };

// A set of vertices whose output channels must be pruned in lockstep.
struct node_group {
    int id = -1;
    std::vector<std::string> members; // sorted vertex ids
    std::vector<std::string> stems;   // conv/linear members, sorted
    int64_t channels = 0;             // shared out-channel count (0 if stemless)
    bool prunable = false;
    exclusion why_excluded = exclusion::none;

    bool contains(const std::string& v) const;
};

struct node_grouping {
    std::vector<node_group> groups; // ordered by smallest member id

    const node_group* group_of(const std::string& vertex_id) const;
};

// Partitions the vertex set (minus graph inputs/outputs) into channel-coupled
// groups: connected regions of accessory/elementwise-joint vertices absorb the
// stems feeding them, remaining stems stand alone. Concat and stem boundaries
// are never crossed.
node_grouping build_pruning_dependency(const graph& g);

// One variable group per output channel of each prunable node group. Trainable
// parameters of stemless accessory groups (e.g. a normalization sitting after
// a concat) are re-attached per channel to the group that produces the
// channel; groups whose channels cannot be traced that way are demoted to
// unprunable. Everything outside the search space lands in one complement
// group. The result exactly covers the trainable scalars of `ps`.
group_partition partition_pzig(const graph& g, node_grouping& grouping, const param_store& ps);

// Color vertices by node group for DOT export; unprunable groups render dashed.
dot_decoration decorate_grouping(const node_grouping& grouping);

} // namespace oto
