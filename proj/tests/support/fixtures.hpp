#pragma once

#include "oto/dataset.hpp"
#include "oto/erase_space.hpp"
#include "oto/model_zoo.hpp"
#include "oto/prune_space.hpp"
#include "oto/sparse_opt.hpp"
#include "oto/subnet.hpp"

namespace fixtures {

// Shapes inferred at batch 1, ready for the dependency analyses.
oto::graph prepared(const oto::model& m);

struct spaces {
    oto::graph g; // shapes inferred
    oto::node_grouping grouping;
    oto::erasing_graph segments;
    oto::group_partition part;
};

spaces analyze(const oto::model& m, oto::group_partition::mode_t mode);

// Synthetic-data training driver used across the suites. Trains in place.
struct train_run {
    oto::train_result result;
    oto::dataset data;
};

train_run train_synthetic(oto::model& m, const spaces& sp, oto::optimizer_config cfg,
                          oto::opt_method method, uint64_t seed, int64_t batch = 4,
                          int64_t samples = 160);

// Top-1 accuracy of the single-output model on the dataset, eval mode.
double accuracy(const oto::model& m, const oto::dataset& ds, int64_t batch = 32);

// The ids every equivalence/zero-invariance suite iterates over.
std::vector<uint64_t> fixture_seeds();

} // namespace fixtures
