#pragma once

#include <set>
#include <string>
#include <vector>

#include "oto/graph.hpp"
#include "oto/graph_io.hpp"
#include "oto/params.hpp"
#include "oto/partition.hpp"

namespace oto {

// A maximal single-path run of vertices: removal is all-or-nothing. Joints
// start their own segment and keep growing downstream, so a joint is always
// the first member of its segment.
struct segment {
    int id = -1;
    std::vector<std::string> members; // in growth order
    bool erasable = false;
    bool is_input = false;  // consumes directly from a graph input
    bool is_output = false; // feeds a graph output
};

struct erasing_graph {
    std::vector<segment> segments;
    std::map<std::string, int> seg_of;
    std::vector<std::pair<int, int>> edges; // sorted, deduplicated

    const segment& at(int id) const { return segments[(size_t)id]; }
};

// Walks the graph breadth-first from the input consumers. A segment grows
// while the current vertex has exactly one outgoing edge and the next vertex
// is an unvisited non-joint with a single producer. A segment is erasable
// (a removal candidate) when it carries trainable parameters, at least one
// edge leaving it lands on a joint, none lands on a Mul, and no member is an
// unrecognized op. A candidate may still feed plain consumers; whether those
// survive without it is the validity check's job, not candidacy's.
erasing_graph build_erasing_dependency(const graph& g);

// True when, with `removed` segments deleted, every output-adjacent segment is
// still reachable from an input-adjacent one and every vertex in a remaining
// segment keeps at least one live producer (joints are never starved, plain
// consumers never orphaned).
bool erasing_valid(const graph& g, const erasing_graph& eg, const std::set<int>& removed);

// One variable group per erasable segment: the trainable scalars of its
// members, plus the per-channel rows of any normalization in a non-erasable
// segment whose channel is produced exclusively by this segment (a surviving
// shift term would otherwise re-bias the dead channels and break exactness).
// Everything else lands in one complement group.
group_partition partition_ezig(const graph& g, const erasing_graph& eg,
                               const param_store& ps);

// Color vertices by segment; non-erasable segments render dashed.
dot_decoration decorate_segments(const erasing_graph& eg);

} // namespace oto
