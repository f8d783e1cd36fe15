#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "oto/graph.hpp"
#include "oto/params.hpp"

namespace oto {

struct tensor {
    shape_t shape;
    std::vector<float> data;

    tensor() = default;
    explicit tensor(shape_t s) : shape(std::move(s)), data(shape_numel(shape), 0.0f) {}
    int64_t numel() const { return (int64_t)data.size(); }
};

enum class run_mode { train, eval };

// Everything backward needs: per-vertex outputs, the batch statistics a
// BatchNorm actually normalized with, maxpool argmax indices, and (when
// record_patterns is set) ReLU sign masks for kink detection.
struct vertex_cache {
    tensor out;
    std::vector<double> bn_mean, bn_inv_std;
    std::vector<int64_t> argmax;
    std::vector<uint8_t> relu_mask;
};

struct forward_cache {
    std::map<std::string, vertex_cache> at;
    run_mode mode = run_mode::eval;
    bool record_patterns = false;
};

// Numerics, fixed for the whole engine (not manifest attrs):
//   BatchNorm eps 1e-5; running-stat momentum 0.1; biased (1/N) variance used
//   both to normalize and to update running stats. f32 storage, f64
//   accumulation in every reduction, fixed loop order, so outputs are
//   bit-identical run to run. Every kernel output is checked finite.
// In train mode BatchNorm running stats in `ps` are updated in place.
forward_cache forward(const graph& g, param_store& ps,
                      const std::map<std::string, tensor>& inputs, run_mode mode,
                      bool record_patterns = false);

// Reverse-mode VJP over the cached forward. loss_grads maps output-vertex id
// to dLoss/dOutput (missing outputs contribute nothing). Returns gradients in
// param_store arena layout; scalars of tensors not on any path to a seeded
// output stay exactly zero. BN running stats always get zero gradient.
std::vector<float> backward(const graph& g, const param_store& ps,
                            const forward_cache& cache,
                            const std::map<std::string, tensor>& loss_grads);

// Mean softmax cross-entropy over the batch plus its logit gradient.
struct ce_result {
    double loss = 0.0;
    tensor grad;
};
ce_result softmax_cross_entropy(const tensor& logits, const std::vector<int>& labels);

int64_t argmax_row(const tensor& logits, int64_t row);

struct finite_diff_report {
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped = 0; // coordinates rejected because a ReLU/maxpool kink moved
};

// Central-difference check of backward() against the loss
// sum_o <w_o, out_o> with fixed seeded weights. Samples `samples` trainable
// coordinates; relative error is |analytic - numeric| / max(1, |analytic|).
// Coordinates whose +-eps forwards flip a ReLU mask or move a maxpool argmax
// are skipped and replaced where possible.
finite_diff_report finite_diff_check(const graph& g, const param_store& ps,
                                     const std::map<std::string, tensor>& inputs,
                                     double eps = 1e-3, int samples = 200,
                                     uint64_t seed = 7);

// Activation dump for debugging: cached vertex outputs in blob format.
std::vector<uint8_t> dump_activations(const forward_cache& cache);

} // namespace oto
