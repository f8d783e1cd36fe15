// Command-line front end: analyze / train / compress / verify / gen-model.
// Artifacts are deterministic under a fixed seed (no timestamps), so whole
// pipelines can be diffed byte for byte.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "oto/dataset.hpp"
#include "oto/engine.hpp"
#include "oto/erase_space.hpp"
#include "oto/graph_io.hpp"
#include "oto/model_zoo.hpp"
#include "oto/prune_space.hpp"
#include "oto/sparse_opt.hpp"
#include "oto/subnet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct run_config {
    std::string model;
    std::string mode = "prune";
    std::string optimizer = "sgd";
    std::string dataset = "synthetic";
    std::string out = "out";
    std::string checkpoint;
    double sparsity = 0.5;
    int64_t target_count = -1;
    int64_t steps = 200;
    int64_t epochs = 0; // when > 0, steps = epochs * batches_per_epoch
    int64_t warmup = -1;
    int64_t batch = 8;
    int64_t samples = 640; // synthetic dataset size
    double lr = 0.01;
    std::string schedule = "constant";
    double weight_decay = 0.0;
    double eps_hs = 0.0;
    double alpha_mix = 0.5;
    double tol = 1e-5;
    int64_t verify_n = 16;
    uint64_t seed = 7;
    bool record_lambda = false;
};

void apply_config_file(run_config& rc, const std::string& path) {
    std::ifstream in(path);
    if (!in) oto::fail(oto::errc::io, "cannot open config " + path);
    json j = json::parse(in, nullptr, true, true);
    auto get = [&](const char* key, auto& dst) {
        if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
    };
    get("model", rc.model);
    get("mode", rc.mode);
    get("optimizer", rc.optimizer);
    get("dataset", rc.dataset);
    get("out", rc.out);
    get("checkpoint", rc.checkpoint);
    get("sparsity", rc.sparsity);
    get("target_count", rc.target_count);
    get("steps", rc.steps);
    get("epochs", rc.epochs);
    get("warmup", rc.warmup);
    get("batch", rc.batch);
    get("samples", rc.samples);
    get("lr", rc.lr);
    get("schedule", rc.schedule);
    get("weight_decay", rc.weight_decay);
    get("eps_hs", rc.eps_hs);
    get("alpha_mix", rc.alpha_mix);
    get("tol", rc.tol);
    get("seed", rc.seed);
    get("record_lambda", rc.record_lambda);
}

oto::model load_prefixed(const std::string& prefix) {
    return oto::load_model(prefix + ".json", prefix + ".bin");
}

void save_prefixed(const oto::model& m, const std::string& prefix) {
    oto::save_model(m, prefix + ".json", prefix + ".bin");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) oto::fail(oto::errc::io, "cannot write " + path.string());
    out << text;
}

oto::opt_method method_for(const std::string& mode) {
    if (mode == "prune") return oto::opt_method::dhspg;
    if (mode == "erase") return oto::opt_method::h2spg;
    oto::fail(oto::errc::config, "mode must be prune or erase, got '" + mode + "'");
}

oto::optimizer_config to_opt_config(const run_config& rc) {
    oto::optimizer_config cfg;
    cfg.variant = oto::variant_from_string(rc.optimizer);
    cfg.lr = rc.lr;
    cfg.schedule = rc.schedule;
    cfg.weight_decay = rc.weight_decay;
    cfg.steps = rc.steps;
    cfg.warmup = rc.warmup;
    cfg.target_fraction = rc.sparsity;
    cfg.target_count = rc.target_count;
    cfg.eps_hs = rc.eps_hs;
    cfg.alpha_mix = rc.alpha_mix;
    cfg.record_lambda = rc.record_lambda;
    return cfg;
}

// Analysis bundle shared by the train and compress paths.
struct analysis {
    oto::node_grouping grouping;   // prune
    oto::erasing_graph segments;   // erase
    oto::group_partition part;
    oto::dot_decoration deco;
};

analysis analyze_model(const oto::model& m, const std::string& mode) {
    analysis a;
    oto::graph g = m.g;
    oto::infer_shapes(g, oto::manifest_input_shapes(g, 1));
    if (mode == "prune") {
        a.grouping = oto::build_pruning_dependency(g);
        a.part = oto::partition_pzig(g, a.grouping, m.params);
        a.deco = oto::decorate_grouping(a.grouping);
    } else if (mode == "erase") {
        a.segments = oto::build_erasing_dependency(g);
        a.part = oto::partition_ezig(g, a.segments, m.params);
        a.deco = oto::decorate_segments(a.segments);
    } else {
        oto::fail(oto::errc::config, "mode must be prune or erase, got '" + mode + "'");
    }
    return a;
}

oto::dataset make_dataset(const run_config& rc, const oto::model& m) {
    if (rc.dataset == "synthetic" || rc.dataset.empty()) {
        const oto::graph& g = m.g;
        int classes = 10;
        for (const auto& out : g.outputs) {
            const auto prods = g.producers(out);
            if (!prods.empty() && g.at(prods[0]).kind == oto::op_kind::linear)
                classes = (int)g.at(prods[0]).attr_int("out_features");
        }
        const auto shapes = oto::manifest_input_shapes(g, 1);
        oto::shape_t sample(shapes.begin()->second.begin() + 1, shapes.begin()->second.end());
        return oto::gen_synthetic(classes, rc.samples, sample, rc.seed);
    }
    if (rc.dataset.rfind("idx:", 0) == 0) {
        const std::string rest = rc.dataset.substr(4);
        const auto comma = rest.find(',');
        if (comma == std::string::npos)
            oto::fail(oto::errc::config, "--dataset idx:<images>,<labels>");
        return oto::load_idx(rest.substr(0, comma), rest.substr(comma + 1));
    }
    oto::fail(oto::errc::config, "unknown dataset '" + rc.dataset + "'");
}

int cmd_analyze(const run_config& rc) {
    const oto::model m = load_prefixed(rc.model);
    const analysis a = analyze_model(m, rc.mode);
    fs::create_directories(rc.out);
    write_text(fs::path(rc.out) / "partition.json", oto::serialize_partition(a.part));
    oto::graph g = m.g;
    write_text(fs::path(rc.out) / "dependency.dot", oto::export_dot(g, &a.deco));
    if (rc.mode == "prune") {
        int prunable = 0;
        for (const auto& ng : a.grouping.groups) prunable += ng.prunable ? 1 : 0;
        std::cout << "node groups: " << a.grouping.groups.size() << " (prunable " << prunable
                  << "), PZIGs: " << a.part.zig_count() << "\n";
    } else {
        int erasable = 0;
        for (const auto& s : a.segments.segments) erasable += s.erasable ? 1 : 0;
        std::cout << "segments: " << a.segments.segments.size() << " (erasable " << erasable
                  << "), EZIGs: " << a.part.zig_count() << "\n";
    }
    return 0;
}

int cmd_train(const run_config& rc) {
    oto::model m = load_prefixed(rc.model);
    oto::infer_shapes(m.g, oto::manifest_input_shapes(m.g, rc.batch));
    if (m.g.inputs.size() != 1 || m.g.outputs.size() != 1)
        oto::fail(oto::errc::config, "training needs a single-input single-output model");
    const std::string input_id = m.g.inputs[0];
    const std::string output_id = m.g.outputs[0];

    const analysis a = analyze_model(m, rc.mode);
    const oto::dataset ds = make_dataset(rc, m);
    oto::batcher bt(ds, rc.batch, rc.seed + 1);

    oto::optimizer_config cfg = to_opt_config(rc);
    if (rc.epochs > 0) cfg.steps = rc.epochs * bt.batches_per_epoch();

    oto::tensor images;
    std::vector<int> labels;
    oto::train_hooks hooks;
    hooks.g = &m.g;
    hooks.eg = &a.segments;
    hooks.loss_grad = [&](std::vector<float>& grad) {
        bt.next(images, labels);
        const auto fc = oto::forward(m.g, m.params, {{input_id, images}}, oto::run_mode::train);
        const auto ce = oto::softmax_cross_entropy(fc.at.at(output_id).out, labels);
        grad = oto::backward(m.g, m.params, fc, {{output_id, ce.grad}});
        return ce.loss;
    };

    const oto::train_result res =
        oto::train_sparse(m.params.arena(), a.part, cfg, method_for(rc.mode), hooks);

    fs::create_directories(rc.out);
    write_text(fs::path(rc.out) / "partition.json", oto::serialize_partition(a.part));
    write_text(fs::path(rc.out) / "checkpoint.json", oto::serialize_manifest(m.g));
    oto::write_file_bytes((fs::path(rc.out) / "checkpoint.bin").string(),
                          oto::write_blob(m.params));

    json cls;
    cls["mode"] = rc.mode;
    cls["target"] = res.target;
    cls["shortfall"] = res.shortfall;
    cls["redundant"] = res.classes.redundant;
    write_text(fs::path(rc.out) / "classification.json", cls.dump(2) + "\n");

    std::ostringstream hist;
    hist << "step,loss,zero_groups,lr\n";
    for (const auto& h : res.history)
        hist << h.step << ',' << h.loss << ',' << h.zero_groups << ',' << h.lr << '\n';
    write_text(fs::path(rc.out) / "history.csv", hist.str());

    if (rc.record_lambda) {
        std::ostringstream lt;
        lt << "step,group,lambda,lo,hi,interval,ip_grad,ip_x\n";
        for (const auto& r : res.lambda_trace)
            lt << r.step << ',' << r.group << ',' << r.pick.lambda << ',' << r.pick.lo << ','
               << r.pick.hi << ',' << (r.pick.interval ? 1 : 0) << ',' << r.ip_grad << ','
               << r.ip_x << '\n';
        write_text(fs::path(rc.out) / "lambda_trace.csv", lt.str());
    }

    std::cout << "trained " << cfg.steps << " steps, " << res.classes.redundant.size()
              << " of " << a.part.zig_count() << " groups zeroed (target " << res.target
              << ")\n";
    if (res.shortfall)
        std::cout << "warning: hierarchy exhausted valid candidates before the target\n";
    return 0;
}

int cmd_compress(const run_config& rc) {
    const fs::path ck(rc.checkpoint.empty() ? rc.out : rc.checkpoint);
    oto::model full = oto::load_model((ck / "checkpoint.json").string(),
                                      (ck / "checkpoint.bin").string());
    std::ifstream in(ck / "classification.json");
    if (!in) oto::fail(oto::errc::io, "cannot open " + (ck / "classification.json").string());
    const json cls = json::parse(in);
    const std::string mode = cls.at("mode").get<std::string>();
    const std::vector<int> redundant = cls.at("redundant").get<std::vector<int>>();

    analysis a = analyze_model(full, mode);
    oto::subnetwork sub = mode == "prune"
                              ? oto::construct_pruned(full, a.grouping, a.part, redundant)
                              : oto::construct_erased(full, a.segments, a.part, redundant);

    fs::create_directories(rc.out);
    save_prefixed(sub.net, (fs::path(rc.out) / "sub").string());
    write_text(fs::path(rc.out) / "provenance.json", oto::provenance_json(sub));
    const std::string report = oto::surgery_report(full, sub);
    write_text(fs::path(rc.out) / "report.txt", report);
    std::cout << report;
    return 0;
}

int cmd_verify(const run_config& rc, const std::string& full_prefix,
               const std::string& sub_prefix) {
    const oto::model full = load_prefixed(full_prefix);
    const oto::model sub = load_prefixed(sub_prefix);
    const oto::equivalence_report rep =
        oto::verify_equivalence(full, sub, (int)rc.verify_n, rc.tol, rc.seed);
    std::cout << "max abs diff " << rep.max_abs_diff << " over " << rc.verify_n
              << " inputs (tol " << rc.tol << "): " << (rep.pass ? "PASS" : "FAIL") << "\n";
    if (!rep.detail.empty()) std::cout << rep.detail << "\n";
    return rep.pass ? 0 : 1;
}

int cmd_gen_model(const std::string& name, uint64_t seed, const std::string& out) {
    oto::model m;
    if (name == "demonet")
        m = oto::make_demonet(seed);
    else if (name == "regnet-toy")
        m = oto::make_regnet_toy(seed);
    else if (name == "linear-toy")
        m = oto::make_linear_toy(seed);
    else if (name == "fixture")
        m = oto::random_fixture(seed);
    else
        oto::fail(oto::errc::config, "unknown model '" + name + "'");
    if (const auto dir = fs::path(out).parent_path(); !dir.empty())
        fs::create_directories(dir);
    save_prefixed(m, out);
    std::cout << "wrote " << out << ".json / .bin (" << m.g.vertices.size() << " vertices, "
              << m.params.total_scalars() << " scalars)\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    run_config rc;
    // The config file provides defaults; explicit flags override them.
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") {
            try {
                apply_config_file(rc, argv[i + 1]);
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 2;
            }
        }

    CLI::App app{"one-shot structured compression pipeline"};
    app.require_subcommand(1);
    std::string config_path, gen_name = "demonet", full_prefix, sub_prefix;

    auto add_common = [&](CLI::App* c) {
        c->add_option("--config", config_path, "JSON config supplying defaults");
        c->add_option("--seed", rc.seed);
        c->add_option("--out", rc.out);
    };

    CLI::App* an = app.add_subcommand("analyze", "build the dependency graph and partition");
    add_common(an);
    an->add_option("--model", rc.model)->required();
    an->add_option("--mode", rc.mode);

    CLI::App* tr = app.add_subcommand("train", "train once with structured sparsity");
    add_common(tr);
    tr->add_option("--model", rc.model)->required();
    tr->add_option("--mode", rc.mode);
    tr->add_option("--sparsity", rc.sparsity);
    tr->add_option("--target-count", rc.target_count);
    tr->add_option("--optimizer", rc.optimizer);
    tr->add_option("--steps", rc.steps);
    tr->add_option("--epochs", rc.epochs);
    tr->add_option("--warmup", rc.warmup);
    tr->add_option("--batch", rc.batch);
    tr->add_option("--samples", rc.samples);
    tr->add_option("--lr", rc.lr);
    tr->add_option("--schedule", rc.schedule);
    tr->add_option("--weight-decay", rc.weight_decay);
    tr->add_option("--eps-hs", rc.eps_hs);
    tr->add_option("--alpha-mix", rc.alpha_mix);
    tr->add_option("--dataset", rc.dataset);
    tr->add_flag("--record-lambda", rc.record_lambda);

    CLI::App* co = app.add_subcommand("compress", "cut the trained model down to the subnetwork");
    add_common(co);
    co->add_option("--checkpoint", rc.checkpoint, "directory written by train");

    CLI::App* ve = app.add_subcommand("verify", "check full-vs-subnetwork output equivalence");
    add_common(ve);
    ve->add_option("--full", full_prefix)->required();
    ve->add_option("--sub", sub_prefix)->required();
    ve->add_option("--n", rc.verify_n);
    ve->add_option("--tol", rc.tol);

    CLI::App* ge = app.add_subcommand("gen-model", "write a built-in model to disk");
    add_common(ge);
    ge->add_option("--name", gen_name, "demonet | regnet-toy | linear-toy | fixture");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 2 : 0;
    }

    try {
        if (an->parsed()) return cmd_analyze(rc);
        if (tr->parsed()) return cmd_train(rc);
        if (co->parsed()) return cmd_compress(rc);
        if (ve->parsed()) return cmd_verify(rc, full_prefix, sub_prefix);
        if (ge->parsed()) return cmd_gen_model(gen_name, rc.seed, rc.out);
    } catch (const oto::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
