#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "oto/graph.hpp"

namespace oto {

// All tensors live in one contiguous f32 arena, in insertion order. The
// optimizer treats the trainable subset of the arena as its flattened iterate,
// so group index ranges are plain arena ranges and no gather/scatter happens
// per step.
//
// param_names conventions per vertex kind:
//   Conv2d  : [weight] or [weight, bias]    weight (out,in,kh,kw), bias (out)
//   Linear  : [weight] or [weight, bias]    weight (out,in),       bias (out)
//   BatchNorm2d : [gamma, beta, running_mean, running_var], each (channels);
//                 gamma/beta are trainable, running stats are not.
class param_store {
public:
    struct entry {
        std::string name;
        shape_t shape;
        int64_t offset = 0; // into arena
        int64_t size = 0;
    };

    void add(const std::string& name, const shape_t& shape, const float* data = nullptr);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    const entry& info(const std::string& name) const;

    float* data(const std::string& name);
    const float* data(const std::string& name) const;

    std::vector<float>& arena() { return arena_; }
    const std::vector<float>& arena() const { return arena_; }
    const std::vector<entry>& entries() const { return entries_; }
    int64_t total_scalars() const { return (int64_t)arena_.size(); }

private:
    std::vector<float> arena_;
    std::vector<entry> entries_;
    std::map<std::string, size_t> index_;
};

// Cross-checks param_names against vertex kinds and tensor shapes against
// attrs (filter (out,in,kh,kw), bias (out), BN vectors (channels), ...).
void validate_params(const graph& g, const param_store& ps);

// Names of trainable tensors, in graph topological order then param_names
// order. This is the canonical flattened-x layout used by the partition and
// the optimizer. BN running stats are excluded.
std::vector<std::string> trainable_names(const graph& g);

// Serialized tensor container. Layout: magic "OTOP", u32 LE tensor count,
// then per tensor one record aligned to a 16-byte boundary (zero padding
// between records): u16 LE name length, name bytes, u8 rank, u32 LE dims,
// f32 LE data.
std::vector<uint8_t> write_blob(const param_store& ps);
param_store read_blob(const uint8_t* bytes, size_t len);

std::vector<uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes);

} // namespace oto
