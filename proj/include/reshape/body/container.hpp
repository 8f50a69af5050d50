#pragma once

// Body-model container
// --------------------
//   bytes 0..7    magic "RSHPBODY"
//   bytes 8..11   format version, uint32 little-endian
//   bytes 12..15  header length N, uint32 little-endian
//   bytes 16..    N bytes of UTF-8 JSON header
//   then          data section: little-endian 32-bit blocks
//
// The header lists `dims` {vertices, faces, joints, betas} and `arrays`, each
// entry {name, dtype ("f32" | "i32"), shape, offset}, offset counted in bytes
// from the start of the data section. Required arrays: template_vertices [V,3],
// faces [F,3] i32, shape_dirs [V,3,B], pose_dirs [V,3,9(J-1)],
// joint_regressor [J,V], skin_weights [V,J], parents [J] i32 (root = -1).

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reshape/body/model.hpp"

namespace reshape::body {

inline constexpr std::array<char, 8> kContainerMagic{'R', 'S', 'H', 'P', 'B', 'O', 'D', 'Y'};
inline constexpr std::uint32_t kContainerVersion = 1;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

struct ArrayBlock {
    std::string name;
    std::string dtype;
    std::vector<std::int64_t> shape;
    std::vector<std::uint32_t> words;
};

inline ArrayBlock f32_block(std::string name, std::vector<std::int64_t> shape,
                            const std::vector<double>& values) {
    ArrayBlock b{std::move(name), "f32", std::move(shape), {}};
    b.words.reserve(values.size());
    for (double v : values) b.words.push_back(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    return b;
}

inline ArrayBlock i32_block(std::string name, std::vector<std::int64_t> shape,
                            const std::vector<int>& values) {
    ArrayBlock b{std::move(name), "i32", std::move(shape), {}};
    b.words.reserve(values.size());
    for (int v : values) b.words.push_back(static_cast<std::uint32_t>(static_cast<std::int32_t>(v)));
    return b;
}

template <typename Matrix>
std::vector<double> row_major(const Matrix& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(static_cast<double>(m(r, c)));
    }
    return out;
}

}  // namespace detail

/// Serializes a model. Reals are stored as float32, so values are rounded.
inline std::vector<std::uint8_t> encode_model(const BodyModel& m) {
    using detail::f32_block;
    using detail::i32_block;
    const auto v = static_cast<std::int64_t>(m.num_vertices());
    const auto f = static_cast<std::int64_t>(m.num_faces());
    const auto j = static_cast<std::int64_t>(m.num_joints());
    const auto b = static_cast<std::int64_t>(m.num_betas());

    std::vector<int> faces;
    for (Eigen::Index r = 0; r < m.faces.rows(); ++r) {
        for (int c = 0; c < 3; ++c) faces.push_back(m.faces(r, c));
    }
    std::vector<detail::ArrayBlock> blocks;
    blocks.push_back(f32_block("template_vertices", {v, 3}, detail::row_major(m.template_vertices)));
    blocks.push_back(i32_block("faces", {f, 3}, faces));
    blocks.push_back(f32_block("shape_dirs", {v, 3, b}, detail::row_major(m.shape_dirs)));
    blocks.push_back(f32_block("pose_dirs", {v, 3, 9 * (j - 1)}, detail::row_major(m.pose_dirs)));
    blocks.push_back(f32_block("joint_regressor", {j, v}, detail::row_major(m.joint_regressor)));
    blocks.push_back(f32_block("skin_weights", {v, j}, detail::row_major(m.skin_weights)));
    blocks.push_back(i32_block("parents", {j}, m.parents));

    nlohmann::json header;
    header["format"] = "reshape-body";
    header["version"] = kContainerVersion;
    header["dims"] = {{"vertices", v}, {"faces", f}, {"joints", j}, {"betas", b}};
    header["arrays"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& blk : blocks) {
        header["arrays"].push_back(
            {{"name", blk.name}, {"dtype", blk.dtype}, {"shape", blk.shape}, {"offset", offset}});
        offset += 4 * blk.words.size();
    }
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(kContainerMagic.begin(), kContainerMagic.end());
    detail::put_u32(out, kContainerVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& blk : blocks) {
        for (std::uint32_t w : blk.words) detail::put_u32(out, w);
    }
    return out;
}

inline BodyModel decode_model(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 16 || !std::equal(kContainerMagic.begin(), kContainerMagic.end(), bytes.begin())) {
        throw FormatError("malformed container: missing RSHPBODY magic");
    }
    const std::uint32_t version = detail::get_u32(bytes.data() + 8);
    if (version != kContainerVersion) {
        throw FormatError("malformed container: unsupported version " + std::to_string(version));
    }
    const std::uint32_t header_len = detail::get_u32(bytes.data() + 12);
    if (bytes.size() < 16ull + header_len) throw FormatError("malformed container: truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed container header: ") + e.what());
    }
    const std::size_t data_start = 16 + header_len;
    const std::size_t data_size = bytes.size() - data_start;

    std::int64_t v = 0, f = 0, j = 0, b = 0;
    std::map<std::string, nlohmann::json> arrays;
    try {
        const auto& dims = header.at("dims");
        v = dims.at("vertices").get<std::int64_t>();
        f = dims.at("faces").get<std::int64_t>();
        j = dims.at("joints").get<std::int64_t>();
        b = dims.at("betas").get<std::int64_t>();
        for (const auto& a : header.at("arrays")) arrays[a.at("name").get<std::string>()] = a;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed container header: ") + e.what());
    }
    if (v <= 0 || f < 0 || j <= 0 || b < 0) throw FormatError("malformed container: invalid dims");

    auto fetch = [&](const std::string& name, const std::string& dtype,
                     const std::vector<std::int64_t>& expected) -> std::vector<std::uint32_t> {
        const auto it = arrays.find(name);
        if (it == arrays.end()) throw FormatError("malformed container: missing array '" + name + "'");
        const auto& a = it->second;
        std::vector<std::int64_t> shape;
        std::uint64_t offset = 0;
        try {
            if (a.at("dtype").get<std::string>() != dtype) {
                throw FormatError("malformed container: array '" + name + "' must be " + dtype);
            }
            shape = a.at("shape").get<std::vector<std::int64_t>>();
            offset = a.at("offset").get<std::uint64_t>();
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("malformed container: array '" + name + "': " + e.what());
        }
        if (shape != expected) {
            throw DimensionError("array '" + name + "' has shape " + nlohmann::json(shape).dump() +
                                 ", dims imply " + nlohmann::json(expected).dump());
        }
        std::uint64_t count = 1;
        for (auto s : shape) count *= static_cast<std::uint64_t>(s);
        if (offset % 4 != 0 || offset + 4 * count > data_size) {
            throw FormatError("malformed container: truncated array block '" + name + "'");
        }
        std::vector<std::uint32_t> words(count);
        const std::uint8_t* p = bytes.data() + data_start + offset;
        for (std::uint64_t i = 0; i < count; ++i) words[i] = detail::get_u32(p + 4 * i);
        return words;
    };
    auto as_real = [](std::uint32_t w) { return static_cast<double>(std::bit_cast<float>(w)); };
    auto as_int = [](std::uint32_t w) { return static_cast<int>(static_cast<std::int32_t>(w)); };

    BodyModel m;
    const auto tv = fetch("template_vertices", "f32", {v, 3});
    m.template_vertices.resize(v, 3);
    for (std::int64_t i = 0; i < v * 3; ++i) m.template_vertices(i / 3, i % 3) = as_real(tv[static_cast<std::size_t>(i)]);

    const auto fw = fetch("faces", "i32", {f, 3});
    m.faces.resize(f, 3);
    for (std::int64_t i = 0; i < f * 3; ++i) m.faces(i / 3, i % 3) = as_int(fw[static_cast<std::size_t>(i)]);

    auto fill = [&](Eigen::MatrixXd& dst, const std::vector<std::uint32_t>& src, std::int64_t rows, std::int64_t cols) {
        dst.resize(rows, cols);
        for (std::int64_t i = 0; i < rows * cols; ++i) dst(i / cols, i % cols) = as_real(src[static_cast<std::size_t>(i)]);
    };
    fill(m.shape_dirs, fetch("shape_dirs", "f32", {v, 3, b}), 3 * v, b);
    fill(m.pose_dirs, fetch("pose_dirs", "f32", {v, 3, 9 * (j - 1)}), 3 * v, 9 * (j - 1));
    fill(m.joint_regressor, fetch("joint_regressor", "f32", {j, v}), j, v);
    fill(m.skin_weights, fetch("skin_weights", "f32", {v, j}), v, j);
    for (auto w : fetch("parents", "i32", {j})) m.parents.push_back(as_int(w));

    validate(m);
    return m;
}

inline void save_model(const BodyModel& m, const std::filesystem::path& path) {
    const auto bytes = encode_model(m);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + path.string());
}

inline BodyModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("model file not found: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_model(bytes);
}

}  // namespace reshape::body
