#include "pxrl/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <map>
#include <memory>

namespace pxrl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_u32(std::FILE* f, uint32_t v) {
    if (std::fwrite(&v, 4, 1, f) != 1) throw IoError("checkpoint: short write");
}

uint32_t read_u32(std::FILE* f) {
    uint32_t v = 0;
    if (std::fread(&v, 4, 1, f) != 1) throw IoError("checkpoint: short read");
    return v;
}

}  // namespace

void write_tensor_file(const std::string& path, const std::vector<NamedTensor>& tensors) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw IoError("cannot open for writing: " + path);
    if (std::fwrite("PXRL", 1, 4, f.get()) != 4) throw IoError("checkpoint: short write");
    write_u32(f.get(), kCheckpointVersion);
    for (const auto& t : tensors) {
        write_u32(f.get(), static_cast<uint32_t>(t.name.size()));
        if (!t.name.empty() && std::fwrite(t.name.data(), 1, t.name.size(), f.get()) != t.name.size())
            throw IoError("checkpoint: short write");
        write_u32(f.get(), static_cast<uint32_t>(t.shape.size()));
        for (int d : t.shape) write_u32(f.get(), static_cast<uint32_t>(d));
        if (numel_of(t.shape) != static_cast<long>(t.values.size()))
            throw ContractError("write_tensor_file: '" + t.name + "' shape/value mismatch");
        if (!t.values.empty() &&
            std::fwrite(t.values.data(), 4, t.values.size(), f.get()) != t.values.size())
            throw IoError("checkpoint: short write");
    }
    if (std::fflush(f.get()) != 0) throw IoError("checkpoint: flush failed for " + path);
}

std::vector<NamedTensor> read_tensor_file(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw IoError("cannot open: " + path);
    char magic[4];
    if (std::fread(magic, 1, 4, f.get()) != 4 || std::string(magic, 4) != "PXRL")
        throw IoError("not a PXRL file: " + path);
    const uint32_t version = read_u32(f.get());
    if (version != kCheckpointVersion)
        throw IoError("unsupported PXRL version " + std::to_string(version) + " in " + path);
    std::vector<NamedTensor> tensors;
    for (;;) {
        uint32_t name_len = 0;
        const size_t got = std::fread(&name_len, 4, 1, f.get());
        if (got != 1) {
            if (std::feof(f.get())) break;
            throw IoError("checkpoint: short read in " + path);
        }
        NamedTensor t;
        t.name.resize(name_len);
        if (name_len && std::fread(t.name.data(), 1, name_len, f.get()) != name_len)
            throw IoError("checkpoint: short read in " + path);
        const uint32_t rank = read_u32(f.get());
        t.shape.resize(rank);
        for (uint32_t i = 0; i < rank; ++i) t.shape[i] = static_cast<int>(read_u32(f.get()));
        const long n = numel_of(t.shape);
        t.values.resize(static_cast<size_t>(n));
        if (n && std::fread(t.values.data(), 4, static_cast<size_t>(n), f.get()) != static_cast<size_t>(n))
            throw IoError("checkpoint: short read in " + path);
        tensors.push_back(std::move(t));
    }
    return tensors;
}

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, TensorPtr<float>>>& params) {
    std::vector<NamedTensor> tensors;
    tensors.reserve(params.size());
    for (const auto& [name, p] : params) tensors.push_back({name, p->shape, p->values});
    write_tensor_file(path, tensors);
}

void load_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, TensorPtr<float>>>& params) {
    auto tensors = read_tensor_file(path);
    std::map<std::string, const NamedTensor*> by_name;
    for (const auto& t : tensors) by_name[t.name] = &t;
    for (const auto& [name, p] : params) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw IoError("checkpoint " + path + " is missing tensor '" + name + "'");
        if (it->second->shape != p->shape)
            throw ShapeError("checkpoint tensor '" + name + "' shape " + shape_str(it->second->shape) +
                             " != expected " + shape_str(p->shape));
        p->values = it->second->values;
    }
}

}  // namespace pxrl
