#include "ctxasr/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "ctxasr/errors.hpp"

namespace ctxasr {

namespace {

constexpr char kMagic[8] = {'C', 'T', 'X', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(b, 8);
}

double get_f64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

bool context_path_param(const std::string& name) {
    return name.rfind("prompt.", 0) == 0 || name.find(".att.ca_") != std::string::npos ||
           name.rfind("encoder.fc_ctx", 0) == 0;
}

}  // namespace

const Tensor* NamedTensors::find(const std::string& name) const {
    for (const auto& [n, t] : items)
        if (n == name) return &t;
    return nullptr;
}

NamedTensors snapshot(Model& model) {
    NamedTensors out;
    model.visit([&out](const std::string& name, Tensor& t) {
        Tensor copy = t;
        copy.grad.clear();
        copy.requires_grad = false;
        out.items.emplace_back(name, std::move(copy));
    });
    return out;
}

void write_checkpoint(const std::string& path, const NamedTensors& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path);
    out.write(kMagic, 8);
    put_u32(out, kVersion);
    put_u32(out, static_cast<uint32_t>(params.items.size()));
    for (const auto& [name, t] : params.items) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<uint32_t>(t.rank()));
        for (int e : t.shape) put_u32(out, static_cast<uint32_t>(e));
        for (double v : t.data) put_f64(out, v);
    }
    if (!out) throw DataError("short write on checkpoint " + path);
}

NamedTensors read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError(path + ": not a checkpoint file");
    uint32_t version = get_u32(in);
    if (version != kVersion)
        throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
    uint32_t count = get_u32(in);
    NamedTensors out;
    out.items.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = get_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        uint32_t rank = get_u32(in);
        std::vector<int> shape(rank);
        for (uint32_t r = 0; r < rank; ++r) shape[r] = static_cast<int>(get_u32(in));
        Tensor t(shape);
        for (double& v : t.data) v = get_f64(in);
        if (!in) throw DataError(path + ": truncated checkpoint at parameter " + name);
        out.items.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

NamedTensors checkpoint_average(const std::vector<std::string>& paths) {
    if (paths.empty()) throw std::invalid_argument("checkpoint_average: no checkpoints");
    NamedTensors acc = read_checkpoint(paths[0]);
    for (size_t k = 1; k < paths.size(); ++k) {
        NamedTensors next = read_checkpoint(paths[k]);
        if (next.items.size() != acc.items.size())
            throw DataError("checkpoint_average: " + paths[k] + " has a different parameter set");
        for (auto& [name, t] : acc.items) {
            const Tensor* other = next.find(name);
            if (!other || other->shape != t.shape)
                throw DataError("checkpoint_average: parameter " + name +
                                " missing or shaped differently in " + paths[k]);
            for (size_t i = 0; i < t.data.size(); ++i) t.data[i] += other->data[i];
        }
    }
    double inv = 1.0 / static_cast<double>(paths.size());
    for (auto& [name, t] : acc.items)
        for (double& v : t.data) v *= inv;
    return acc;
}

void load_into(Model& model, const NamedTensors& params, bool allow_fresh_context) {
    size_t used = 0;
    model.visit([&](const std::string& name, Tensor& t) {
        const Tensor* src = params.find(name);
        if (!src) {
            if (allow_fresh_context && context_path_param(name)) return;  // fresh init stays
            throw DataError("checkpoint is missing parameter " + name);
        }
        if (src->shape != t.shape)
            throw DataError("checkpoint parameter " + name + " has shape " +
                            shape_str(src->shape) + ", model expects " + shape_str(t.shape));
        t.data = src->data;
        t.zero_grad();
        ++used;
    });
    if (!allow_fresh_context && used != params.items.size())
        throw DataError("checkpoint carries " + std::to_string(params.items.size()) +
                        " parameters, model consumed " + std::to_string(used));
}

}  // namespace ctxasr
