#include <doctest.h>

#include <set>

#include "oto/engine.hpp"
#include "oto/rng.hpp"
#include "support/fixtures.hpp"

using namespace oto;

namespace {

// input(1x2x2) -> conv1(1->4, k1) -> conv2(4->2, k1) -> output, with
// hand-picked parameter values so slices can be checked scalar by scalar.
model k1_chain() {
    model m;
    vertex in;
    in.id = "x";
    in.kind = op_kind::input;
    in.op_tag = "Input";
    in.attrs["shape"] = {1, 2, 2};
    m.g.add_vertex(in);
    auto conv = [&](const std::string& id, int64_t ic, int64_t oc) {
        vertex v;
        v.id = id;
        v.kind = op_kind::conv2d;
        v.op_tag = "Conv2d";
        v.attrs = {{"in_channels", {ic}},
                   {"out_channels", {oc}},
                   {"kernel", {1, 1}},
                   {"stride", {1, 1}},
                   {"padding", {0, 0}}};
        v.params = {id + ".weight", id + ".bias"};
        m.g.add_vertex(v);
    };
    conv("conv1", 1, 4);
    conv("conv2", 4, 2);
    vertex out;
    out.id = "y";
    out.kind = op_kind::output;
    out.op_tag = "Output";
    m.g.add_vertex(out);
    m.g.add_edge("x", "conv1", 0);
    m.g.add_edge("conv1", "conv2", 0);
    m.g.add_edge("conv2", "y", 0);
    m.params.add("conv1.weight", {4, 1, 1, 1}, std::vector<float>{1, 2, 3, 4}.data());
    m.params.add("conv1.bias", {4}, std::vector<float>{0.1f, 0.2f, 0.3f, 0.4f}.data());
    m.params.add("conv2.weight", {2, 4, 1, 1},
                 std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8}.data());
    m.params.add("conv2.bias", {2}, std::vector<float>{-1, -2}.data());
    return m;
}

std::vector<int> zigs_of_channels(const fixtures::spaces& sp, const std::string& stem,
                                  const std::set<int64_t>& channels) {
    const int structure = sp.grouping.group_of(stem)->id;
    std::vector<int> ids;
    for (const auto& vg : sp.part.groups)
        if (vg.is_zig && vg.structure_id == structure && channels.count(vg.channel))
            ids.push_back(vg.id);
    return ids;
}

std::vector<float> tensor_values(const param_store& ps, const std::string& name) {
    const auto& e = ps.info(name);
    const float* d = ps.data(name);
    return {d, d + e.size};
}

} // namespace

TEST_CASE("pruning slices rows and columns bit-identically") {
    model m = k1_chain();
    auto sp = fixtures::analyze(m, group_partition::mode_t::prune);
    const std::vector<int> redundant = zigs_of_channels(sp, "conv1", {1, 3});
    REQUIRE(redundant.size() == 2);
    for (int id : redundant) group_zero(sp.part.at(id), m.params.arena());

    const subnetwork sub = construct_pruned(m, sp.grouping, sp.part, redundant);
    CHECK(tensor_values(sub.net.params, "conv1.weight") == std::vector<float>{1, 3});
    CHECK(tensor_values(sub.net.params, "conv1.bias") == std::vector<float>{0.1f, 0.3f});
    CHECK(tensor_values(sub.net.params, "conv2.weight") == std::vector<float>{1, 3, 5, 7});
    CHECK(tensor_values(sub.net.params, "conv2.bias") == std::vector<float>{-1, -2});
    CHECK(sub.net.g.at("conv1").attr_int("out_channels") == 2);
    CHECK(sub.net.g.at("conv2").attr_int("in_channels") == 2);

    CHECK(sub.provenance.at("conv1.weight").kept_rows == std::vector<int64_t>{0, 2});
    CHECK(sub.provenance.at("conv2.weight").kept_cols == std::vector<int64_t>{0, 2});

    const equivalence_report rep = verify_equivalence(m, sub.net, 16, 1e-5, 3);
    CHECK(rep.pass);
    CHECK(rep.max_abs_diff == 0.0);
}

TEST_CASE("surgery refuses a redundant group that is not exactly zero") {
    model m = k1_chain();
    auto sp = fixtures::analyze(m, group_partition::mode_t::prune);
    const std::vector<int> redundant = zigs_of_channels(sp, "conv1", {1});
    try {
        construct_pruned(m, sp.grouping, sp.part, redundant);
        FAIL("expected consistency error");
    } catch (const error& e) {
        CHECK(e.kind() == errc::consistency);
        CHECK(std::string(e.what()).find("not exactly zero") != std::string::npos);
    }
}

TEST_CASE("pruning every channel of a layer is a degenerate-layer error") {
    model m = k1_chain();
    auto sp = fixtures::analyze(m, group_partition::mode_t::prune);
    const std::vector<int> redundant = zigs_of_channels(sp, "conv1", {0, 1, 2, 3});
    REQUIRE(redundant.size() == 4);
    for (int id : redundant) group_zero(sp.part.at(id), m.params.arena());
    try {
        construct_pruned(m, sp.grouping, sp.part, redundant);
        FAIL("expected validity error");
    } catch (const error& e) {
        CHECK(e.kind() == errc::validity);
        CHECK(std::string(e.what()).find("degenerate layer") != std::string::npos);
    }
}

TEST_CASE("empty removal reproduces the model in both modes") {
    const model m = make_demonet(5);
    {
        auto sp = fixtures::analyze(m, group_partition::mode_t::prune);
        const subnetwork sub = construct_pruned(m, sp.grouping, sp.part, {});
        CHECK(serialize_manifest(sub.net.g) == serialize_manifest(m.g));
        for (const auto& e : m.params.entries())
            CHECK(tensor_values(sub.net.params, e.name) == tensor_values(m.params, e.name));
    }
    {
        auto sp = fixtures::analyze(m, group_partition::mode_t::erase);
        const subnetwork sub = construct_erased(m, sp.segments, sp.part, {});
        CHECK(serialize_manifest(sub.net.g) == serialize_manifest(m.g));
        for (const auto& e : m.params.entries())
            CHECK(tensor_values(sub.net.params, e.name) == tensor_values(m.params, e.name));
    }
}

TEST_CASE("erasing splices starved joints and slices shared tensors") {
    model m = make_demonet(6);
    auto sp = fixtures::analyze(m, group_partition::mode_t::erase);
    auto zig_of = [&](const std::string& vid) {
        const int sid = sp.segments.seg_of.at(vid);
        for (const auto& vg : sp.part.groups)
            if (vg.is_zig && vg.structure_id == sid) return vg.id;
        REQUIRE(false);
        return -1;
    };
    // drop two concat branches, one add1 operand and one add2 operand
    const std::vector<int> redundant = {zig_of("conv2"), zig_of("conv4"), zig_of("conv6"),
                                        zig_of("conv8")};
    for (int id : redundant) group_zero(sp.part.at(id), m.params.arena());

    const subnetwork sub = construct_erased(m, sp.segments, sp.part, redundant);
    const graph& sg = sub.net.g;
    for (const char* gone : {"conv2", "bn2", "avgpool_a", "conv4", "bn4", "conv6", "conv8",
                             "concat", "add1", "add2"})
        CHECK_FALSE(sg.has(gone));
    for (const char* kept : {"conv1", "maxpool", "conv3", "bn3", "bn6", "conv5", "bn5",
                             "conv7", "avgpool_b", "flatten", "linear1", "linear2"})
        CHECK(sg.has(kept));

    // the surviving concat block re-bases to channels [16,32) of bn6
    const std::vector<int64_t> block{16, 17, 18, 19, 20, 21, 22, 23,
                                     24, 25, 26, 27, 28, 29, 30, 31};
    CHECK(sub.provenance.at("bn6.gamma").kept_rows == block);
    CHECK(sub.provenance.at("bn6.running_mean").kept_rows == block);
    CHECK(sub.provenance.at("conv5.weight").kept_cols == block);
    CHECK(sub.net.params.info("bn6.gamma").size == 16);

    const equivalence_report rep = verify_equivalence(m, sub.net, 16, 1e-5, 11);
    CHECK(rep.pass);
    CHECK(rep.max_abs_diff == 0.0);
}

TEST_CASE("verification is a real check, not a formality") {
    model m = make_demonet(6);
    auto sp = fixtures::analyze(m, group_partition::mode_t::erase);
    int zig = -1;
    for (const auto& vg : sp.part.groups)
        if (vg.is_zig && sp.segments.at(vg.structure_id).members.front() == "conv6")
            zig = vg.id;
    REQUIRE(zig >= 0);
    group_zero(sp.part.at(zig), m.params.arena());
    const subnetwork sub = construct_erased(m, sp.segments, sp.part, {zig});

    // tamper with a scalar the surgery kept: the reports must disagree now
    model tampered = m;
    tampered.params.data("linear2.bias")[0] += 0.25f;
    const equivalence_report bad = verify_equivalence(tampered, sub.net, 4, 1e-5, 2);
    CHECK_FALSE(bad.pass);
    CHECK(bad.max_abs_diff > 1e-3);

    // and a structurally different pair is rejected with a diagnosis
    const equivalence_report mismatched = verify_equivalence(make_regnet_toy(1), sub.net, 2, 1e-5, 2);
    CHECK_FALSE(mismatched.pass);
    CHECK_FALSE(mismatched.detail.empty());
}

TEST_CASE("cost model: frozen demonet totals and sane subnetwork ratios") {
    const model m = make_demonet(1);
    const cost_report full = count_cost(m);
    CHECK(full.macs == 2259552);
    CHECK(full.params == 36954);
    CHECK(full.params == m.params.total_scalars());

    // conv1: 8c * 28*28 spatial * 1*3*3 taps
    for (const auto& oc : full.per_op)
        if (oc.id == "conv1") CHECK(oc.macs == 8 * 28 * 28 * 9);

    model trained = m;
    auto sp = fixtures::analyze(trained, group_partition::mode_t::erase);
    int zig = -1;
    for (const auto& vg : sp.part.groups)
        if (vg.is_zig && sp.segments.at(vg.structure_id).members.front() == "conv8")
            zig = vg.id;
    group_zero(sp.part.at(zig), trained.params.arena());
    const subnetwork sub = construct_erased(trained, sp.segments, sp.part, {zig});
    const cost_report cut = count_cost(sub.net);
    CHECK(cut.macs < full.macs);
    CHECK(cut.params < full.params);

    const std::string report = surgery_report(trained, sub);
    CHECK(report.find("MACs per sample (batch 1)") != std::string::npos);
    CHECK(report.find("running statistics") != std::string::npos);
    const std::string prov = provenance_json(sub);
    CHECK(prov.find("kept_rows") != std::string::npos);
}
