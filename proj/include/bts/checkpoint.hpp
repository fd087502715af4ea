#pragma once

// Checkpoint file format, bit-exact and versioned:
//   magic "BTS1"
//   version         u32 LE (currently 1)
//   width           u32 LE
//   depth           u32 LE
//   k               u32 LE
//   label count     u32 LE
//   per label:      u32 LE byte length, then UTF-8 bytes
//   parameter matrices in declaration order, raw little-endian f32
// Matrix shapes are derived from the header, so any size mismatch is detected
// as truncation. Errors report the byte offset at which parsing failed.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "bts/model.hpp"

namespace bts {

inline constexpr char kCheckpointMagic[4] = {'B', 'T', 'S', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline void put_f32(std::string& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error("checkpoint: " + what + " at offset " + std::to_string(pos));
    }

    std::uint32_t u32(const char* what) {
        if (pos + 4 > buf.size()) fail(std::string("truncated ") + what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(buf[pos + i]);
        pos += 4;
        return v;
    }

    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }

    std::string bytes(std::size_t n, const char* what) {
        if (pos + n > buf.size()) fail(std::string("truncated ") + what);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace detail

// Serializes config, vocabulary and parameters. Save -> load -> save is
// byte-identical.
inline std::string serialize_checkpoint(const Model<float>& model) {
    std::string out;
    out.append(kCheckpointMagic, 4);
    detail::put_u32(out, kCheckpointVersion);
    const ModelConfig& cfg = model.config();
    detail::put_u32(out, cfg.width);
    detail::put_u32(out, cfg.depth);
    detail::put_u32(out, cfg.k);
    detail::put_u32(out, static_cast<std::uint32_t>(cfg.labels.size()));
    for (const auto& label : cfg.labels) {
        detail::put_u32(out, static_cast<std::uint32_t>(label.size()));
        out.append(label);
    }
    for (const auto& e : model.params().entries)
        for (const float v : e.value.data) detail::put_f32(out, v);
    return out;
}

inline Model<float> parse_checkpoint(const std::string& buf) {
    detail::Reader r{buf};
    if (buf.size() < 4 || std::memcmp(buf.data(), kCheckpointMagic, 4) != 0)
        r.fail("bad magic");
    r.pos = 4;
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        r.pos -= 4;
        r.fail("unsupported version " + std::to_string(version));
    }
    ModelConfig cfg;
    cfg.width = r.u32("width");
    cfg.depth = r.u32("depth");
    cfg.k = r.u32("k");
    const std::uint32_t n_labels = r.u32("label count");
    for (std::uint32_t i = 0; i < n_labels; ++i) {
        const std::uint32_t len = r.u32("label length");
        cfg.labels.push_back(r.bytes(len, "label"));
    }

    Model<float> model(cfg);
    for (auto& e : model.params().entries)
        for (float& v : e.value.data) v = r.f32(e.name.c_str());
    if (r.pos != buf.size()) r.fail("trailing bytes");
    return model;
}

inline void save_checkpoint(const Model<float>& model, const std::string& path) {
    const std::string buf = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

inline Model<float> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(buf);
}

}  // namespace bts
