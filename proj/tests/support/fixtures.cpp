#include "fixtures.hpp"

#include "oto/engine.hpp"

namespace fixtures {

oto::graph prepared(const oto::model& m) {
    oto::graph g = m.g;
    oto::infer_shapes(g, oto::manifest_input_shapes(g, 1));
    return g;
}

spaces analyze(const oto::model& m, oto::group_partition::mode_t mode) {
    spaces sp;
    sp.g = prepared(m);
    if (mode == oto::group_partition::mode_t::prune) {
        sp.grouping = oto::build_pruning_dependency(sp.g);
        sp.part = oto::partition_pzig(sp.g, sp.grouping, m.params);
    } else {
        sp.segments = oto::build_erasing_dependency(sp.g);
        sp.part = oto::partition_ezig(sp.g, sp.segments, m.params);
    }
    return sp;
}

train_run train_synthetic(oto::model& m, const spaces& sp, oto::optimizer_config cfg,
                          oto::opt_method method, uint64_t seed, int64_t batch,
                          int64_t samples) {
    oto::graph g = m.g;
    oto::infer_shapes(g, oto::manifest_input_shapes(g, batch));
    const std::string input_id = g.inputs.at(0);
    const std::string output_id = g.outputs.at(0);

    int classes = 4;
    const auto head = g.producers(output_id);
    if (!head.empty() && g.at(head[0]).kind == oto::op_kind::linear)
        classes = (int)g.at(head[0]).attr_int("out_features");
    const auto shapes = oto::manifest_input_shapes(g, 1);
    oto::shape_t sample(shapes.begin()->second.begin() + 1, shapes.begin()->second.end());

    train_run run;
    run.data = oto::gen_synthetic(classes, samples, sample, seed);
    oto::batcher bt(run.data, batch, seed + 1);

    oto::tensor images;
    std::vector<int> labels;
    oto::train_hooks hooks;
    hooks.g = &g;
    hooks.eg = &sp.segments;
    hooks.loss_grad = [&, input_id, output_id](std::vector<float>& grad) {
        bt.next(images, labels);
        const auto fc = oto::forward(g, m.params, {{input_id, images}}, oto::run_mode::train);
        const auto ce = oto::softmax_cross_entropy(fc.at.at(output_id).out, labels);
        grad = oto::backward(g, m.params, fc, {{output_id, ce.grad}});
        return ce.loss;
    };
    run.result = oto::train_sparse(m.params.arena(), sp.part, cfg, method, hooks);
    return run;
}

double accuracy(const oto::model& m, const oto::dataset& ds, int64_t batch) {
    oto::graph g = m.g;
    oto::infer_shapes(g, oto::manifest_input_shapes(g, batch));
    const std::string input_id = g.inputs.at(0);
    const std::string output_id = g.outputs.at(0);
    oto::param_store ps = m.params;
    oto::batcher bt(ds, batch, 1);

    oto::tensor images;
    std::vector<int> labels;
    int64_t right = 0, seen = 0;
    const int64_t nb = bt.batches_per_epoch();
    for (int64_t b = 0; b < nb; ++b) {
        bt.next(images, labels);
        const auto fc = oto::forward(g, ps, {{input_id, images}}, oto::run_mode::eval);
        const oto::tensor& logits = fc.at.at(output_id).out;
        for (int64_t i = 0; i < batch; ++i) {
            right += oto::argmax_row(logits, i) == labels[(size_t)i] ? 1 : 0;
            ++seen;
        }
    }
    return seen ? (double)right / (double)seen : 0.0;
}

std::vector<uint64_t> fixture_seeds() { return {11, 23, 42, 57, 91, 104}; }

} // namespace fixtures
