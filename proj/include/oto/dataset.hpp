#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oto/engine.hpp"
#include "oto/rng.hpp"

namespace oto {

// In-memory labeled image set. images is (n, C, H, W) or (n, F); labels are
// in [0, classes).
struct dataset {
    tensor images;
    std::vector<int> labels;
    int classes = 0;

    int64_t size() const { return images.shape.empty() ? 0 : images.shape[0]; }
    int64_t sample_scalars() const { return size() ? images.numel() / size() : 0; }
};

// Big-endian IDX pair (magic 0x00000803 for images, 0x00000801 for labels).
// Pixels are scaled u8 -> f32 in [0,1]; images come out as (n, 1, rows, cols).
dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Deterministic stand-in data: one Gaussian template per class plus
// half-amplitude noise, classes assigned round-robin so counts stay balanced.
// shape is per-sample, e.g. (1,16,16) or (F,).
dataset gen_synthetic(int classes, int64_t n, const shape_t& shape, uint64_t seed);

// Seeded epoch iterator, reshuffled per epoch, partial tail batch dropped.
class batcher {
public:
    batcher(const dataset& d, int64_t batch, uint64_t seed);

    int64_t batches_per_epoch() const { return ds_.size() / batch_; }

    // Fills the next minibatch, reshuffling at each epoch boundary.
    void next(tensor& images, std::vector<int>& labels);

private:
    const dataset& ds_;
    int64_t batch_;
    rng rng_;
    std::vector<int64_t> order_;
    int64_t cursor_ = 0;
};

} // namespace oto
