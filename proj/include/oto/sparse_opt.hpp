#pragma once

#include <functional>
#include <string>
#include <vector>

#include "oto/erase_space.hpp"
#include "oto/graph.hpp"
#include "oto/params.hpp"
#include "oto/partition.hpp"

namespace oto {

enum class opt_variant { sgd, momentum, adam, adamw };
enum class opt_method { dhspg, h2spg };

opt_variant variant_from_string(const std::string& s);
const char* variant_name(opt_variant v);

struct optimizer_config {
    opt_variant variant = opt_variant::sgd;
    double lr = 0.01;
    std::string schedule = "constant"; // constant | cosine
    double momentum = 0.9;             // momentum variant
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    double weight_decay = 0.0;         // coupled, except adamw (decoupled)
    int64_t steps = 0;
    int64_t warmup = -1;               // -1: max(1, steps/10)
    double target_fraction = -1.0;     // groups to zero, resolved via ceil
    int64_t target_count = -1;         // takes precedence when >= 0
    double tau = 1e-6;                 // norm safeguard
    double eps_hs = 0.0;               // half-space threshold, [0,1)
    double alpha_mix = 0.5;            // salience blend, [0,1]
    bool record_lambda = false;

    double lr_at(int64_t t) const; // schedule evaluated at step t
};

// Resolved and validated sparsity target.
int64_t resolve_target(const optimizer_config& cfg, int zig_count);

struct salience_entry {
    int group = -1;
    double cos_theta = 0.0;
    double magnitude = 0.0; // ||x_g|| / sqrt(|g|), before normalization
    double score = 0.0;     // lower = more redundant
};

struct salience_report {
    std::vector<salience_entry> entries; // one per ZIG, ascending group id
    const salience_entry& for_group(int id) const;
};

// cos_g between the group variables and (EMA) gradient, magnitude term
// normalized by the largest group magnitude, blended by alpha_mix. Lower score
// marks the group as carrying less of the model.
salience_report salience_scores(const group_partition& part, const std::vector<float>& x,
                                const std::vector<double>& grad, double tau,
                                double alpha_mix);

struct classification {
    std::vector<int> redundant; // group ids, ascending
    bool shortfall = false;     // hierarchical search ran out of valid candidates
};

// Bottom-k scores, ties broken by ascending group id.
classification select_redundant_flat(const group_partition& part, const salience_report& rep,
                                     int64_t k);

// Walks candidates by ascending score and accepts a segment deletion only if
// the erasing graph stays valid with everything accepted so far also deleted.
// Stops at k accepted; flags a shortfall when candidates run out first.
classification hierarchical_search(const group_partition& part, const graph& g,
                                   const erasing_graph& eg, const salience_report& rep,
                                   int64_t k);

struct lambda_choice {
    double lambda = 0.0;
    double lo = 0.0, hi = 0.0; // meaningful when interval
    bool interval = false;     // true: cos<0 and the open interval is non-empty
};

// Penalty weight for the redundant direction. cos<0 yields the open interval
// (-cos*|g|, |g|/(-cos)): any interior point shrinks the group and decreases
// the loss at once; the midpoint is taken. Otherwise any positive value works
// and the gradient norm is used (also the fallback for the degenerate cos=-1
// case where the interval is empty).
lambda_choice lambda_interval(double cos_theta, double grad_norm);

struct step_record {
    int64_t step = 0;
    double loss = 0.0;
    int zero_groups = 0; // ZIGs exactly zero after the step
    double lr = 0.0;
};

struct lambda_record {
    int64_t step = 0;
    int group = -1;
    lambda_choice pick;
    double ip_grad = 0.0; // <d, -estimate>
    double ip_x = 0.0;    // <d, -x>
};

struct train_result {
    classification classes;
    int64_t target = 0;
    bool shortfall = false;
    std::vector<step_record> history;
    std::vector<lambda_record> lambda_trace; // when cfg.record_lambda
};

// Evaluates the loss at the current (shared) parameter state and writes the
// full-arena gradient. Stateful: each call consumes the next minibatch.
using grad_fn = std::function<double(std::vector<float>& grad_out)>;

struct train_hooks {
    grad_fn loss_grad;
    const graph* g = nullptr;         // h2spg validity checks
    const erasing_graph* eg = nullptr;
};

// One-shot sparse training: warm-up with the configured variant on everything
// while accumulating an EMA gradient, classify redundant groups (flat for
// dhspg, hierarchical for h2spg), then hybrid steps: plain variant updates for
// important groups; for redundant groups dhspg walks the dual-half-space
// direction and h2spg keeps the variant step, both followed by half-space
// projection against the pre-step iterate (exact zero is absorbing). Ends by
// projecting every redundant group to zero, so the zero-group count equals the
// classification size.
train_result train_sparse(std::vector<float>& x, const group_partition& part,
                          const optimizer_config& cfg, opt_method method,
                          const train_hooks& hooks);

// Reference loop: the configured variant applied to the given index ranges,
// nothing else. Returns the per-step losses.
std::vector<double> plain_train(std::vector<float>& x,
                                const std::vector<std::pair<int64_t, int64_t>>& ranges,
                                const optimizer_config& cfg, const grad_fn& loss_grad);

// Arena ranges of the trainable tensors, for plain_train.
std::vector<std::pair<int64_t, int64_t>> trainable_ranges(const graph& g,
                                                          const param_store& ps);

} // namespace oto
