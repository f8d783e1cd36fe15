#pragma once

#include <string>
#include <vector>

#include "oto/params.hpp"

namespace oto {

// A group slice is a run of dim-0 rows of one tensor: one filter of a conv
// weight, one bias scalar, one BN scalar, or a whole tensor. Groups never
// need finer granularity than rows.
struct group_slice {
    std::string tensor;
    int64_t row_begin = 0;
    int64_t row_end = 0; // exclusive
};

struct variable_group {
    int id = 0;
    bool is_zig = false;
    std::string kind;      // "pzig", "ezig" or "complement"
    int structure_id = -1; // node-group id (prune) or segment id (erase)
    int channel = -1;      // prune: output-channel index within the node group
    std::vector<group_slice> slices;

    // arena scalar ranges, derived from slices; sorted, non-overlapping
    std::vector<std::pair<int64_t, int64_t>> ranges;
    int64_t size() const;
};

struct group_partition {
    enum class mode_t { prune, erase };
    mode_t mode = mode_t::prune;
    std::vector<variable_group> groups;

    int zig_count() const;
    const variable_group& at(int id) const;
};

int64_t rows_of(const shape_t& s);     // dim-0 extent
int64_t row_size_of(const shape_t& s); // scalars per row

// Fills variable_group::ranges from slices.
void resolve_ranges(group_partition& part, const param_store& ps);

// Every trainable scalar in exactly one group; throws errc::consistency
// naming the first tensor that is missed or double-covered.
void check_cover(const group_partition& part, const graph& g, const param_store& ps);

// Group vector ops used by salience and the optimizer.
double group_dot(const variable_group& vg, const std::vector<float>& a,
                 const std::vector<float>& b);
double group_norm(const variable_group& vg, const std::vector<float>& a);
void group_zero(const variable_group& vg, std::vector<float>& a);
bool group_is_zero(const variable_group& vg, const std::vector<float>& a);

std::string serialize_partition(const group_partition& part);
group_partition parse_partition(const std::string& json_text);

} // namespace oto
