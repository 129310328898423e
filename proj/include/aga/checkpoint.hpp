#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "aga/error.hpp"
#include "aga/model.hpp"
#include "aga/runconfig.hpp"

namespace aga {

// IEEE CRC-32 (reflected, poly 0xEDB88320).
inline uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0) {
    static const auto table = [] {
        std::vector<uint32_t> t(256);
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int b = 0; b < 8; ++b) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t crc = ~seed;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return ~crc;
}

// Checkpoint layout (little-endian):
//   "AGAH" | u32 version | u32 config_len | config INI text
//   | u32 tensor_count | { u32 name_len | name | u32 rows | u32 cols
//   | rows*cols f64 } * | u32 crc32 of everything after the magic.
// Buffers (signal stats, fixed projections) are stored alongside the
// trainable tensors; a round-trip reproduces the model bit-for-bit.
inline void save_checkpoint(const std::string& path, Model& model) {
    std::vector<uint8_t> payload;
    auto put_u32 = [&](uint32_t v) {
        for (int b = 0; b < 4; ++b) payload.push_back(static_cast<uint8_t>((v >> (8 * b)) & 0xFF));
    };
    auto put_bytes = [&](const void* p, size_t n) {
        const uint8_t* b = static_cast<const uint8_t*>(p);
        payload.insert(payload.end(), b, b + n);
    };
    put_u32(1);  // version
    std::string cfg = model_config_to_ini(model.cfg);
    put_u32(static_cast<uint32_t>(cfg.size()));
    put_bytes(cfg.data(), cfg.size());

    uint32_t count = 0;
    model.visit([&](const std::string&, Tensor&) { ++count; }, true);
    put_u32(count);
    model.visit(
        [&](const std::string& name, Tensor& t) {
            put_u32(static_cast<uint32_t>(name.size()));
            put_bytes(name.data(), name.size());
            put_u32(static_cast<uint32_t>(t.rows));
            put_u32(static_cast<uint32_t>(t.cols));
            put_bytes(t.data.data(), t.data.size() * sizeof(double));
        },
        true);

    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    os.write("AGAH", 4);
    os.write(reinterpret_cast<const char*>(payload.data()),
             static_cast<std::streamsize>(payload.size()));
    uint32_t crc = crc32(payload.data(), payload.size());
    os.write(reinterpret_cast<const char*>(&crc), 4);
    if (!os) throw DataError("checkpoint write failed: " + path);
}

inline Model load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "AGAH", 4) != 0)
        throw DataError("not a checkpoint file: " + path);
    const uint8_t* payload = bytes.data() + 4;
    const size_t payload_len = bytes.size() - 8;
    uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    if (crc32(payload, payload_len) != stored_crc)
        throw DataError("checkpoint checksum mismatch: " + path);

    size_t off = 0;
    auto get_u32 = [&]() {
        if (off + 4 > payload_len) throw DataError("truncated checkpoint: " + path);
        uint32_t v;
        std::memcpy(&v, payload + off, 4);
        off += 4;
        return v;
    };
    uint32_t version = get_u32();
    if (version != 1) throw DataError("unsupported checkpoint version " + std::to_string(version));
    uint32_t cfg_len = get_u32();
    if (off + cfg_len > payload_len) throw DataError("truncated checkpoint: " + path);
    std::string cfg_text(reinterpret_cast<const char*>(payload + off), cfg_len);
    off += cfg_len;

    Model model = Model::skeleton(model_config_from_ini(cfg_text));
    std::unordered_map<std::string, Tensor*> slots;
    model.visit([&](const std::string& name, Tensor& t) { slots[name] = &t; }, true);

    uint32_t count = get_u32();
    std::unordered_map<std::string, bool> seen;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = get_u32();
        if (off + name_len > payload_len) throw DataError("truncated checkpoint: " + path);
        std::string name(reinterpret_cast<const char*>(payload + off), name_len);
        off += name_len;
        uint32_t rows = get_u32();
        uint32_t cols = get_u32();
        size_t n = static_cast<size_t>(rows) * cols;
        if (off + n * sizeof(double) > payload_len) throw DataError("truncated checkpoint: " + path);
        auto it = slots.find(name);
        if (it == slots.end()) throw DataError("checkpoint has unknown tensor '" + name + "'");
        if (seen.count(name)) throw DataError("checkpoint repeats tensor '" + name + "'");
        seen[name] = true;
        Tensor& t = *it->second;
        if (t.rows != static_cast<int>(rows) || t.cols != static_cast<int>(cols))
            throw DataError("checkpoint tensor '" + name + "' is " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", expected " + shape_str(t));
        std::memcpy(t.data.data(), payload + off, n * sizeof(double));
        off += n * sizeof(double);
    }
    if (seen.size() != slots.size())
        throw DataError("checkpoint is missing " + std::to_string(slots.size() - seen.size()) +
                        " tensors");
    return model;
}

}  // namespace aga
