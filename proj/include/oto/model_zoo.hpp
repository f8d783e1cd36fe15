#pragma once

#include <cstdint>

#include "oto/graph_io.hpp"

namespace oto {

// Built-in architectures with seeded He/BN initialization. These cover the
// structural corner cases the analyses have to get right: multi-branch concat
// with a shared downstream BatchNorm, stacked Adds, pooling branches, and a
// linear head.
model make_demonet(uint64_t seed = 1);

// Stem conv + three two-branch residual-style blocks (conv/conv into Add) +
// linear head. Its erasing space is three independent pairs, so aggressive
// flat selection starves a joint while hierarchy-aware selection cannot.
model make_regnet_toy(uint64_t seed = 2);

// input -> Linear -> output. Kink-free, so gradient checks are exact to
// rounding.
model make_linear_toy(uint64_t seed = 3);

// Seeded family of small valid graphs mixing Conv/BN/ReLU/pools/Add/Mul/
// Concat/Linear. Every fixture has at least one prunable node group and one
// erasable segment.
model random_fixture(uint64_t seed);

} // namespace oto
