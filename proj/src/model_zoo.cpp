#include "oto/model_zoo.hpp"

#include <cmath>

#include "oto/rng.hpp"

namespace oto {

namespace {

// Incremental graph assembly with seeded initialization.
struct builder {
    model m;
    rng r;

    explicit builder(uint64_t seed) : r(seed) {}

    void input(const std::string& id, const shape_t& sample_shape) {
        vertex v;
        v.id = id;
        v.kind = op_kind::input;
        v.op_tag = "Input";
        v.attrs["shape"] = sample_shape;
        m.g.add_vertex(std::move(v));
    }

    void output(const std::string& id, const std::string& from) {
        vertex v;
        v.id = id;
        v.kind = op_kind::output;
        v.op_tag = "Output";
        m.g.add_vertex(std::move(v));
        wire(from, id);
    }

    void wire(const std::string& src, const std::string& dst) {
        int slot = 0;
        for (const auto& e : m.g.edges)
            if (e.dst == dst) slot = std::max(slot, e.slot + 1);
        m.g.add_edge(src, dst, slot);
    }

    std::vector<float> he(int64_t n, int64_t fan_in) {
        const float std = std::sqrt(2.0f / (float)fan_in);
        std::vector<float> w((size_t)n);
        for (auto& x : w) x = (float)r.normal() * std;
        return w;
    }

    void conv(const std::string& id, const std::string& from, int64_t in, int64_t out,
              int64_t k, int64_t stride, int64_t pad) {
        vertex v;
        v.id = id;
        v.kind = op_kind::conv2d;
        v.op_tag = "Conv2d";
        v.attrs["in_channels"] = {in};
        v.attrs["out_channels"] = {out};
        v.attrs["kernel"] = {k, k};
        v.attrs["stride"] = {stride, stride};
        v.attrs["padding"] = {pad, pad};
        v.params = {id + ".weight", id + ".bias"};
        m.params.add(id + ".weight", {out, in, k, k}, he(out * in * k * k, in * k * k).data());
        m.params.add(id + ".bias", {out}, std::vector<float>((size_t)out, 0.0f).data());
        m.g.add_vertex(std::move(v));
        wire(from, id);
    }

    void bn(const std::string& id, const std::string& from, int64_t channels) {
        vertex v;
        v.id = id;
        v.kind = op_kind::batchnorm2d;
        v.op_tag = "BatchNorm2d";
        v.attrs["channels"] = {channels};
        v.params = {id + ".gamma", id + ".beta", id + ".running_mean", id + ".running_var"};
        const std::vector<float> ones((size_t)channels, 1.0f), zeros((size_t)channels, 0.0f);
        m.params.add(id + ".gamma", {channels}, ones.data());
        m.params.add(id + ".beta", {channels}, zeros.data());
        m.params.add(id + ".running_mean", {channels}, zeros.data());
        m.params.add(id + ".running_var", {channels}, ones.data());
        m.g.add_vertex(std::move(v));
        wire(from, id);
    }

    void linear(const std::string& id, const std::string& from, int64_t in, int64_t out) {
        vertex v;
        v.id = id;
        v.kind = op_kind::linear;
        v.op_tag = "Linear";
        v.attrs["in_features"] = {in};
        v.attrs["out_features"] = {out};
        v.params = {id + ".weight", id + ".bias"};
        m.params.add(id + ".weight", {out, in}, he(out * in, in).data());
        m.params.add(id + ".bias", {out}, std::vector<float>((size_t)out, 0.0f).data());
        m.g.add_vertex(std::move(v));
        wire(from, id);
    }

    void simple(const std::string& id, op_kind kind, const std::string& from) {
        vertex v;
        v.id = id;
        v.kind = kind;
        v.op_tag = op_name(kind);
        m.g.add_vertex(std::move(v));
        if (!from.empty()) wire(from, id);
    }

    void pool(const std::string& id, op_kind kind, const std::string& from, int64_t k,
              int64_t stride, int64_t pad = 0) {
        vertex v;
        v.id = id;
        v.kind = kind;
        v.op_tag = op_name(kind);
        v.attrs["kernel"] = {k, k};
        v.attrs["stride"] = {stride, stride};
        v.attrs["padding"] = {pad, pad};
        m.g.add_vertex(std::move(v));
        wire(from, id);
    }

    void concat(const std::string& id, const std::vector<std::string>& from) {
        vertex v;
        v.id = id;
        v.kind = op_kind::concat;
        v.op_tag = "Concat";
        v.attrs["axis"] = {1};
        m.g.add_vertex(std::move(v));
        for (const auto& f : from) wire(f, id);
    }

    void joint(const std::string& id, op_kind kind, const std::vector<std::string>& from) {
        vertex v;
        v.id = id;
        v.kind = kind;
        v.op_tag = op_name(kind);
        m.g.add_vertex(std::move(v));
        for (const auto& f : from) wire(f, id);
    }

    model done() {
        m.g.validate();
        validate_params(m.g, m.params);
        return std::move(m);
    }
};

} // namespace

model make_demonet(uint64_t seed) {
    builder b(seed);
    b.input("input", {1, 28, 28});
    b.conv("conv1", "input", 1, 8, 3, 1, 1); // 8 x 28 x 28

    b.conv("conv2", "conv1", 8, 16, 3, 2, 1); // 16 x 14 x 14
    b.bn("bn2", "conv2", 16);
    b.pool("maxpool", op_kind::maxpool2d, "conv1", 2, 2); // 8 x 14 x 14
    b.conv("conv3", "maxpool", 8, 16, 3, 1, 1);
    b.bn("bn3", "conv3", 16);
    b.pool("avgpool_a", op_kind::avgpool2d, "conv1", 2, 2);
    b.conv("conv4", "avgpool_a", 8, 16, 3, 1, 1);
    b.bn("bn4", "conv4", 16);

    b.concat("concat", {"bn2", "bn3", "bn4"}); // 48 x 14 x 14
    b.bn("bn6", "concat", 48);

    b.conv("conv5", "bn6", 48, 24, 3, 2, 1); // 24 x 7 x 7
    b.bn("bn5", "conv5", 24);
    b.conv("conv6", "bn6", 48, 24, 3, 2, 1);
    b.joint("add1", op_kind::add, {"bn5", "conv6"});

    // residual tail: conv8 transforms conv7's output and the sum rejoins it,
    // so conv7 is a bridge every input-output path crosses
    b.conv("conv7", "add1", 24, 24, 3, 1, 1);
    b.conv("conv8", "conv7", 24, 24, 3, 1, 1);
    b.joint("add2", op_kind::add, {"conv7", "conv8"});

    b.pool("avgpool_b", op_kind::avgpool2d, "add2", 7, 7); // 24 x 1 x 1
    b.simple("flatten", op_kind::flatten, "avgpool_b");
    b.linear("linear1", "flatten", 24, 48);
    b.linear("linear2", "linear1", 48, 10);
    b.output("output", "linear2");
    return b.done();
}

model make_regnet_toy(uint64_t seed) {
    builder b(seed);
    b.input("input", {1, 12, 12});
    b.conv("stem", "input", 1, 8, 3, 1, 1);
    std::string prev = "stem";
    for (int i = 1; i <= 3; ++i) {
        const std::string a = "block" + std::to_string(i) + "_a";
        const std::string c = "block" + std::to_string(i) + "_b";
        b.conv(a, prev, 8, 8, 3, 1, 1);
        b.conv(c, prev, 8, 8, 3, 1, 1);
        const std::string add = "join" + std::to_string(i);
        b.joint(add, op_kind::add, {a, c});
        prev = add;
    }
    b.pool("gap", op_kind::avgpool2d, prev, 12, 12);
    b.simple("flatten", op_kind::flatten, "gap");
    b.linear("head", "flatten", 8, 4);
    b.output("output", "head");
    return b.done();
}

model make_linear_toy(uint64_t seed) {
    builder b(seed);
    b.input("input", {6});
    b.linear("fc", "input", 6, 4);
    b.output("output", "fc");
    return b.done();
}

model random_fixture(uint64_t seed) {
    builder b(seed * 977 + 13);
    rng pick(seed);

    const int64_t side = pick.uniform() < 0.5 ? 8 : 12;
    const int64_t c_in = 1 + pick.uniform_int(2);
    const int64_t c_mid = 4 + 2 * pick.uniform_int(3); // 4, 6, 8
    b.input("input", {c_in, side, side});
    b.conv("stem", "input", c_in, c_mid, 3, 1, 1);
    std::string prev = "stem";

    // First block: 2-3 parallel branches joined by Concat, Add or Mul.
    const int branches = 2 + (int)pick.uniform_int(2);
    const double jd = pick.uniform();
    const op_kind join_kind =
        jd < 0.4 ? op_kind::concat : (jd < 0.8 ? op_kind::add : op_kind::mul);
    std::vector<std::string> heads;
    for (int i = 0; i < branches; ++i) {
        const std::string cid = "b" + std::to_string(i) + "_conv";
        std::string tail = prev;
        if (pick.uniform() < 0.4) {
            const std::string pid = "b" + std::to_string(i) + "_pool";
            b.pool(pid, pick.uniform() < 0.5 ? op_kind::maxpool2d : op_kind::avgpool2d, tail,
                   1, 1);
            tail = pid;
        }
        b.conv(cid, tail, c_mid, c_mid, 3, 1, 1);
        tail = cid;
        if (pick.uniform() < 0.6) {
            b.bn(cid + "_bn", tail, c_mid);
            tail = cid + "_bn";
        }
        if (pick.uniform() < 0.4) {
            b.simple(cid + "_relu", op_kind::relu, tail);
            tail = cid + "_relu";
        }
        heads.push_back(tail);
    }
    int64_t joined = c_mid;
    if (join_kind == op_kind::concat) {
        b.concat("join", heads);
        joined = c_mid * branches;
    } else {
        b.joint("join", join_kind, heads);
    }
    prev = "join";
    if (pick.uniform() < 0.5) {
        b.bn("join_bn", prev, joined);
        prev = "join_bn";
    }
    if (pick.uniform() < 0.5) {
        b.simple("join_relu", op_kind::relu, prev);
        prev = "join_relu";
    }

    // Second block: always a conv/conv Add pair, so every fixture has
    // erasable segments regardless of the first join's kind.
    const int64_t c2 = 4 + 2 * pick.uniform_int(3);
    b.conv("p_conv1", prev, joined, c2, 3, 1, 1);
    b.conv("p_conv2", prev, joined, c2, 3, 1, 1);
    if (pick.uniform() < 0.5) {
        b.bn("p_bn1", "p_conv1", c2);
        b.joint("add_tail", op_kind::add, {"p_bn1", "p_conv2"});
    } else {
        b.joint("add_tail", op_kind::add, {"p_conv1", "p_conv2"});
    }

    b.pool("gap", op_kind::avgpool2d, "add_tail", side, side);
    b.simple("flatten", op_kind::flatten, "gap");
    b.linear("head", "flatten", c2, 5);
    b.output("output", "head");
    return b.done();
}

} // namespace oto
