#include "oto/dataset.hpp"

#include <algorithm>
#include <numeric>

#include "oto/params.hpp"

namespace oto {

namespace {

uint32_t read_be32(const std::vector<uint8_t>& b, size_t& pos, const std::string& path) {
    if (pos + 4 > b.size()) fail(errc::io, path + ": unexpected EOF");
    uint32_t v = ((uint32_t)b[pos] << 24) | ((uint32_t)b[pos + 1] << 16) |
                 ((uint32_t)b[pos + 2] << 8) | (uint32_t)b[pos + 3];
    pos += 4;
    return v;
}

} // namespace

dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto ib = read_file_bytes(images_path);
    const auto lb = read_file_bytes(labels_path);

    size_t ip = 0;
    if (read_be32(ib, ip, images_path) != 0x00000803u)
        fail(errc::io, images_path + ": bad IDX magic (want 0x00000803)");
    const uint32_t n = read_be32(ib, ip, images_path);
    const uint32_t rows = read_be32(ib, ip, images_path);
    const uint32_t cols = read_be32(ib, ip, images_path);
    const size_t pixels = (size_t)n * rows * cols;
    if (ip + pixels > ib.size()) fail(errc::io, images_path + ": unexpected EOF");

    size_t lp = 0;
    if (read_be32(lb, lp, labels_path) != 0x00000801u)
        fail(errc::io, labels_path + ": bad IDX magic (want 0x00000801)");
    const uint32_t ln = read_be32(lb, lp, labels_path);
    if (lp + ln > lb.size()) fail(errc::io, labels_path + ": unexpected EOF");
    if (ln != n)
        fail(errc::io, "image/label count mismatch: " + std::to_string(n) + " vs " +
                           std::to_string(ln));

    dataset d;
    d.images = tensor({(int64_t)n, 1, (int64_t)rows, (int64_t)cols});
    for (size_t i = 0; i < pixels; ++i) d.images.data[i] = (float)ib[ip + i] / 255.0f;
    d.labels.resize(n);
    int maxl = 0;
    for (uint32_t i = 0; i < n; ++i) {
        d.labels[i] = (int)lb[lp + i];
        maxl = std::max(maxl, d.labels[i]);
    }
    d.classes = maxl + 1;
    return d;
}

dataset gen_synthetic(int classes, int64_t n, const shape_t& shape, uint64_t seed) {
    if (classes < 1) fail(errc::config, "gen_synthetic: classes must be >= 1");
    if (n < classes) fail(errc::config, "gen_synthetic: need at least one sample per class");

    rng r(seed);
    const int64_t scalars = shape_numel(shape);
    std::vector<std::vector<float>> templates((size_t)classes);
    for (auto& t : templates) {
        t.resize((size_t)scalars);
        for (auto& x : t) x = (float)r.normal();
    }

    dataset d;
    d.classes = classes;
    shape_t full = shape;
    full.insert(full.begin(), n);
    d.images = tensor(full);
    d.labels.resize((size_t)n);
    for (int64_t i = 0; i < n; ++i) {
        const int c = (int)(i % classes);
        d.labels[(size_t)i] = c;
        float* dst = d.images.data.data() + i * scalars;
        for (int64_t j = 0; j < scalars; ++j)
            dst[j] = templates[(size_t)c][(size_t)j] + 0.5f * (float)r.normal();
    }
    return d;
}

batcher::batcher(const dataset& d, int64_t batch, uint64_t seed)
    : ds_(d), batch_(batch), rng_(seed) {
    if (batch < 1 || batch > d.size()) fail(errc::config, "batch size out of range");
    order_.resize((size_t)d.size());
    std::iota(order_.begin(), order_.end(), 0);
    rng_.shuffle(order_);
}

void batcher::next(tensor& images, std::vector<int>& labels) {
    if (cursor_ + batch_ > (int64_t)order_.size()) {
        rng_.shuffle(order_);
        cursor_ = 0;
    }
    shape_t bs = ds_.images.shape;
    bs[0] = batch_;
    if (images.shape != bs) images = tensor(bs);
    labels.resize((size_t)batch_);
    const int64_t scalars = ds_.sample_scalars();
    for (int64_t i = 0; i < batch_; ++i) {
        const int64_t src = order_[(size_t)(cursor_ + i)];
        std::copy_n(ds_.images.data.data() + src * scalars, scalars,
                    images.data.data() + i * scalars);
        labels[(size_t)i] = ds_.labels[(size_t)src];
    }
    cursor_ += batch_;
}

} // namespace oto
