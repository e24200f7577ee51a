#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "dynamo/common.hpp"
#include "dynamo/tensor.hpp"

namespace dynamo {

// Versioned tensor container used for checkpoints and perceptual-weight files.
// Layout (little endian):
//   magic "DYNAMO-CKPT-1\n", u64 step, u32 config length + bytes,
//   u32 entry count, then per entry: u32 key length + key, u32 ndim,
//   u32 dims[ndim], raw float32 data.
class TensorArchive {
public:
    static constexpr const char* kMagic = "DYNAMO-CKPT-1\n";

    uint64_t step = 0;
    std::string config_text;
    std::vector<std::pair<std::string, Tensor>> entries;

    void add(const std::string& key, const Tensor& t) { entries.emplace_back(key, t); }

    const Tensor* find(const std::string& key) const {
        for (const auto& e : entries)
            if (e.first == key) return &e.second;
        return nullptr;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open for write: " + path);
        f.write(kMagic, std::streamsize(std::strlen(kMagic)));
        write_u64(f, step);
        write_u32(f, uint32_t(config_text.size()));
        f.write(config_text.data(), std::streamsize(config_text.size()));
        write_u32(f, uint32_t(entries.size()));
        for (const auto& [key, t] : entries) {
            write_u32(f, uint32_t(key.size()));
            f.write(key.data(), std::streamsize(key.size()));
            write_u32(f, uint32_t(t.ndim()));
            for (int i = 0; i < t.ndim(); ++i) write_u32(f, uint32_t(t.dim(i)));
            f.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.numel() * 4));
        }
        if (!f) throw IoError("write failed: " + path);
    }

    static TensorArchive load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw IoError("cannot open: " + path);
        std::string magic(std::strlen(kMagic), '\0');
        f.read(magic.data(), std::streamsize(magic.size()));
        if (!f || magic != kMagic) throw IoError("bad magic in " + path + " (not a DYNAMO-CKPT-1 archive)");
        TensorArchive a;
        a.step = read_u64(f);
        uint32_t clen = read_u32(f);
        a.config_text.resize(clen);
        f.read(a.config_text.data(), clen);
        uint32_t n = read_u32(f);
        a.entries.reserve(n);
        for (uint32_t i = 0; i < n; ++i) {
            uint32_t klen = read_u32(f);
            std::string key(klen, '\0');
            f.read(key.data(), klen);
            uint32_t ndim = read_u32(f);
            std::vector<int> shape(ndim);
            for (uint32_t d = 0; d < ndim; ++d) shape[d] = int(read_u32(f));
            Tensor t(shape);
            f.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.numel() * 4));
            if (!f) throw IoError("truncated archive: " + path);
            a.entries.emplace_back(std::move(key), std::move(t));
        }
        return a;
    }

private:
    static void write_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
    static void write_u64(std::ofstream& f, uint64_t v) { f.write(reinterpret_cast<const char*>(&v), 8); }
    static uint32_t read_u32(std::ifstream& f) {
        uint32_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 4);
        return v;
    }
    static uint64_t read_u64(std::ifstream& f) {
        uint64_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 8);
        return v;
    }
};

}  // namespace dynamo
