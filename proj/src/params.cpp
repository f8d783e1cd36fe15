#include "oto/params.hpp"

#include <cstring>
#include <fstream>

namespace oto {

void param_store::add(const std::string& name, const shape_t& shape, const float* data) {
    if (index_.count(name)) fail(errc::parse, "duplicate tensor '" + name + "'");
    entry e;
    e.name = name;
    e.shape = shape;
    e.offset = (int64_t)arena_.size();
    e.size = shape_numel(shape);
    if (e.size < 0) fail(errc::parse, "tensor '" + name + "': negative extent");
    index_[name] = entries_.size();
    entries_.push_back(e);
    if (data)
        arena_.insert(arena_.end(), data, data + e.size);
    else
        arena_.resize(arena_.size() + e.size, 0.0f);
}

const param_store::entry& param_store::info(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) fail(errc::consistency, "no tensor named '" + name + "'");
    return entries_[it->second];
}

float* param_store::data(const std::string& name) { return arena_.data() + info(name).offset; }
const float* param_store::data(const std::string& name) const {
    return arena_.data() + info(name).offset;
}

namespace {

void check_shape(const std::string& vid, const param_store& ps, const std::string& name,
                 const shape_t& want) {
    if (!ps.has(name))
        fail(errc::consistency, "vertex '" + vid + "': tensor '" + name + "' missing from blob");
    if (ps.info(name).shape != want)
        fail(errc::consistency, "vertex '" + vid + "': tensor '" + name + "' has shape " +
                                    shape_str(ps.info(name).shape) + ", expected " +
                                    shape_str(want));
}

} // namespace

void validate_params(const graph& g, const param_store& ps) {
    for (const auto& [id, v] : g.vertices) {
        switch (v.kind) {
            case op_kind::conv2d: {
                if (v.params.empty() || v.params.size() > 2)
                    fail(errc::consistency, "vertex '" + id + "': Conv2d wants 1-2 params");
                auto [kh, kw] = v.attr_pair("kernel");
                check_shape(id, ps, v.params[0],
                            {v.attr_int("out_channels"), v.attr_int("in_channels"), kh, kw});
                if (v.params.size() == 2)
                    check_shape(id, ps, v.params[1], {v.attr_int("out_channels")});
                break;
            }
            case op_kind::linear: {
                if (v.params.empty() || v.params.size() > 2)
                    fail(errc::consistency, "vertex '" + id + "': Linear wants 1-2 params");
                check_shape(id, ps, v.params[0],
                            {v.attr_int("out_features"), v.attr_int("in_features")});
                if (v.params.size() == 2)
                    check_shape(id, ps, v.params[1], {v.attr_int("out_features")});
                break;
            }
            case op_kind::batchnorm2d: {
                if (v.params.size() != 4)
                    fail(errc::consistency,
                         "vertex '" + id + "': BatchNorm2d wants gamma, beta, running_mean, "
                         "running_var");
                for (const std::string& name : v.params)
                    check_shape(id, ps, name, {v.attr_int("channels")});
                break;
            }
            default:
                if (!v.params.empty() && v.kind != op_kind::unknown)
                    fail(errc::consistency,
                         "vertex '" + id + "': op has no parameters by definition");
                break;
        }
    }
}

std::vector<std::string> trainable_names(const graph& g) {
    std::vector<std::string> names;
    for (const std::string& id : g.topological_order()) {
        const vertex& v = g.at(id);
        switch (v.kind) {
            case op_kind::conv2d:
            case op_kind::linear:
                for (const std::string& n : v.params) names.push_back(n);
                break;
            case op_kind::batchnorm2d:
                names.push_back(v.params.at(0));
                names.push_back(v.params.at(1));
                break;
            default:
                break;
        }
    }
    return names;
}

namespace {

template <typename T>
void put(std::vector<uint8_t>& out, T v) {
    uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T)); // little-endian host assumed, x86/arm64
    out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
T take(const uint8_t* bytes, size_t len, size_t& pos, const char* what) {
    if (pos + sizeof(T) > len)
        fail(errc::parse, std::string("blob truncated reading ") + what);
    T v;
    std::memcpy(&v, bytes + pos, sizeof(T));
    pos += sizeof(T);
    return v;
}

} // namespace

std::vector<uint8_t> write_blob(const param_store& ps) {
    std::vector<uint8_t> out;
    out.insert(out.end(), {'O', 'T', 'O', 'P'});
    put<uint32_t>(out, (uint32_t)ps.entries().size());
    for (const auto& e : ps.entries()) {
        while (out.size() % 16 != 0) out.push_back(0);
        put<uint16_t>(out, (uint16_t)e.name.size());
        out.insert(out.end(), e.name.begin(), e.name.end());
        put<uint8_t>(out, (uint8_t)e.shape.size());
        for (int64_t d : e.shape) put<uint32_t>(out, (uint32_t)d);
        const float* p = ps.arena().data() + e.offset;
        const uint8_t* raw = reinterpret_cast<const uint8_t*>(p);
        out.insert(out.end(), raw, raw + e.size * sizeof(float));
    }
    return out;
}

param_store read_blob(const uint8_t* bytes, size_t len) {
    size_t pos = 0;
    if (len < 8 || std::memcmp(bytes, "OTOP", 4) != 0)
        fail(errc::parse, "blob: bad magic, expected OTOP");
    pos = 4;
    uint32_t count = take<uint32_t>(bytes, len, pos, "tensor count");
    param_store ps;
    for (uint32_t i = 0; i < count; ++i) {
        while (pos % 16 != 0) {
            if (pos >= len) fail(errc::parse, "blob truncated in record padding");
            ++pos;
        }
        uint16_t name_len = take<uint16_t>(bytes, len, pos, "name length");
        if (pos + name_len > len) fail(errc::parse, "blob truncated reading name");
        std::string name(reinterpret_cast<const char*>(bytes + pos), name_len);
        pos += name_len;
        uint8_t rank = take<uint8_t>(bytes, len, pos, "rank");
        shape_t shape;
        for (uint8_t d = 0; d < rank; ++d)
            shape.push_back((int64_t)take<uint32_t>(bytes, len, pos, "dim"));
        int64_t n = shape_numel(shape);
        if (pos + (size_t)n * sizeof(float) > len)
            fail(errc::parse, "blob truncated reading data of '" + name + "'");
        ps.add(name, shape, reinterpret_cast<const float*>(bytes + pos));
        pos += (size_t)n * sizeof(float);
    }
    return ps;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(errc::io, "cannot open '" + path + "'");
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(f),
                                std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(errc::io, "cannot write '" + path + "'");
    f.write(reinterpret_cast<const char*>(bytes.data()), (std::streamsize)bytes.size());
}

} // namespace oto
