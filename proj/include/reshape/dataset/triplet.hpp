#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reshape/dataset/geometry.hpp"
#include "reshape/image/png.hpp"

namespace reshape::dataset {

enum class BodyType { thin, fat, muscular };

inline constexpr std::array<BodyType, 3> kBodyTypes{BodyType::thin, BodyType::fat, BodyType::muscular};

inline const char* label(BodyType t) {
    switch (t) {
        case BodyType::thin: return "thin";
        case BodyType::fat: return "fat";
        case BodyType::muscular: return "muscular";
    }
    return "?";
}

inline BodyType body_type_from(const std::string& s) {
    for (auto t : kBodyTypes) {
        if (s == label(t)) return t;
    }
    throw ValueError("unknown body type '" + s + "'");
}

struct Member {
    Image8 image;
    Mask mask;
};

/// One identity rendered in up to three body types over a shared background.
struct Triplet {
    std::string identity;
    Image8 background;
    std::map<BodyType, Member> members;

    std::vector<BodyType> present() const {
        std::vector<BodyType> out;
        for (auto t : kBodyTypes) {
            if (members.count(t) != 0) out.push_back(t);
        }
        return out;
    }

    void validate() const {
        for (const auto& [type, m] : members) {
            if (!m.image.same_size(background) || !m.mask.same_size(background) || m.mask.channels != 1 ||
                m.image.channels != background.channels) {
                throw DimensionError(identity + "/" + label(type) + " does not match the background size");
            }
        }
    }
};

struct NormalizedTriplet {
    Triplet triplet;
    std::vector<BodyType> clipped;  // members whose paste ran off the canvas
};

/// Rescales the fat and muscular subjects to the thin subject's mask height and
/// pastes them onto the shared background at the thin subject's anchor. The
/// thin member is the reference and is returned untouched.
inline NormalizedTriplet normalize_triplet(const Triplet& in) {
    in.validate();
    const auto thin = in.members.find(BodyType::thin);
    if (thin == in.members.end()) throw ValueError(in.identity + ": thin reference member is missing");
    const MaskExtent anchor = mask_extent(thin->second.mask);
    NormalizedTriplet out{in, {}};
    for (auto& [type, member] : out.triplet.members) {
        if (type == BodyType::thin) continue;
        const Cutout cut = scale_to_reference(member.image, member.mask, anchor.height_px);
        auto pasted = composite(in.background, cut, anchor);
        member.image = std::move(pasted.image);
        member.mask = std::move(pasted.mask);
        if (pasted.clipped) out.clipped.push_back(type);
    }
    return out;
}

struct TransformationPair {
    std::string id;  // "identity/source→target"
    std::string identity;
    BodyType source;
    BodyType target;
    bool keep = true;
    std::optional<std::string> drop_reason;
};

inline std::string pair_id(const std::string& identity, BodyType source, BodyType target) {
    return identity + "/" + label(source) + "→" + label(target);
}

/// Every ordered pair of distinct present members, in thin, fat, muscular order.
inline std::vector<TransformationPair> enumerate_pairs(const std::string& identity,
                                                       const std::vector<BodyType>& present) {
    if (present.size() < 2) throw ValueError(identity + ": need at least two body types to form pairs");
    std::vector<TransformationPair> out;
    for (auto s : kBodyTypes) {
        if (std::find(present.begin(), present.end(), s) == present.end()) continue;
        for (auto t : kBodyTypes) {
            if (t == s || std::find(present.begin(), present.end(), t) == present.end()) continue;
            out.push_back({pair_id(identity, s, t), identity, s, t, true, std::nullopt});
        }
    }
    return out;
}

inline std::vector<TransformationPair> enumerate_pairs(const Triplet& t) {
    return enumerate_pairs(t.identity, t.present());
}

struct CurationFlag {
    std::string pair_id;
    std::string reason;
};

struct CurationReport {
    std::size_t total = 0;
    std::size_t kept = 0;
    std::size_t dropped = 0;
    std::map<std::string, std::size_t> by_reason;
};

/// Marks flagged pairs as dropped (first reason wins for repeated flags).
inline CurationReport apply_curation(std::vector<TransformationPair>& pairs, const std::vector<CurationFlag>& flags) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < pairs.size(); ++i) index.emplace(pairs[i].id, i);
    for (const auto& f : flags) {
        const auto it = index.find(f.pair_id);
        if (it == index.end()) throw ValueError("curation flag names unknown pair '" + f.pair_id + "'");
        auto& p = pairs[it->second];
        if (!p.keep) continue;
        p.keep = false;
        p.drop_reason = f.reason;
    }
    CurationReport r;
    r.total = pairs.size();
    for (const auto& p : pairs) {
        if (p.keep) {
            ++r.kept;
        } else {
            ++r.dropped;
            ++r.by_reason[*p.drop_reason];
        }
    }
    return r;
}

// ---- manifests -------------------------------------------------------------

struct MemberPaths {
    std::filesystem::path image;
    std::filesystem::path mask;
};

/// One manifest line: identity, background, and per-member image/mask paths.
struct TripletRecord {
    std::string identity;
    std::filesystem::path background;
    std::map<BodyType, MemberPaths> members;

    std::vector<BodyType> present() const {
        std::vector<BodyType> out;
        for (auto t : kBodyTypes) {
            if (members.count(t) != 0) out.push_back(t);
        }
        return out;
    }
};

inline nlohmann::json to_json(const TripletRecord& r) {
    nlohmann::json j{{"identity", r.identity}, {"background", r.background.generic_string()}};
    for (const auto& [type, paths] : r.members) {
        j[label(type)] = {{"image", paths.image.generic_string()}, {"mask", paths.mask.generic_string()}};
    }
    return j;
}

inline TripletRecord record_from_json(const nlohmann::json& j) {
    try {
        TripletRecord r;
        r.identity = j.at("identity").get<std::string>();
        if (r.identity.empty()) throw FormatError("empty identity");
        r.background = j.at("background").get<std::string>();
        for (auto t : kBodyTypes) {
            if (!j.contains(label(t))) continue;
            const auto& m = j.at(label(t));
            r.members[t] = {m.at("image").get<std::string>(), m.at("mask").get<std::string>()};
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed manifest record: ") + e.what());
    }
}

namespace detail {

template <typename F>
void for_each_jsonl(const std::filesystem::path& path, F&& f) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path.string());
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
        f(j, number);
    }
}

}  // namespace detail

inline std::vector<TripletRecord> read_manifest(const std::filesystem::path& path) {
    std::vector<TripletRecord> out;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, int) { out.push_back(record_from_json(j)); });
    return out;
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<TripletRecord>& records) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline std::vector<CurationFlag> read_flags(const std::filesystem::path& path) {
    std::vector<CurationFlag> out;
    detail::for_each_jsonl(path, [&](const nlohmann::json& j, int line) {
        try {
            out.push_back({j.at("pair").get<std::string>(), j.value("reason", std::string("unspecified"))});
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(line) + ": " + e.what());
        }
    });
    return out;
}

/// Single-channel mask from any PNG: a pixel is occupied if any channel is non-zero.
inline Mask to_mask(const Image8& img) {
    Mask m(img.width, img.height, 1);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            bool on = false;
            for (int c = 0; c < img.channels; ++c) on = on || img.at(x, y, c) != 0;
            m.at(x, y) = on ? 255 : 0;
        }
    }
    return m;
}

/// Loads a manifest record; relative paths resolve against `base`.
inline Triplet load_triplet(const TripletRecord& r, const std::filesystem::path& base) {
    auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : base / p; };
    Triplet t;
    t.identity = r.identity;
    t.background = image::read_png(resolve(r.background));
    for (const auto& [type, paths] : r.members) {
        t.members[type] = {image::read_png(resolve(paths.image)), to_mask(image::read_png(resolve(paths.mask)))};
    }
    t.validate();
    return t;
}

/// Writes `<dir>/<identity>/{background,<type>,<type>_mask}.png` and returns the
/// matching record with paths relative to `dir`.
inline TripletRecord save_triplet(const Triplet& t, const std::filesystem::path& dir) {
    const std::filesystem::path rel = t.identity;
    std::filesystem::create_directories(dir / rel);
    TripletRecord r{t.identity, rel / "background.png", {}};
    image::write_png(dir / r.background, t.background);
    for (const auto& [type, m] : t.members) {
        MemberPaths p{rel / (std::string(label(type)) + ".png"), rel / (std::string(label(type)) + "_mask.png")};
        image::write_png(dir / p.image, m.image);
        image::write_png(dir / p.mask, m.mask);
        r.members[type] = p;
    }
    return r;
}

inline nlohmann::json to_json(const TransformationPair& p) {
    nlohmann::json j{{"id", p.id},
                     {"identity", p.identity},
                     {"source", label(p.source)},
                     {"target", label(p.target)},
                     {"keep", p.keep}};
    if (p.drop_reason) j["drop_reason"] = *p.drop_reason;
    return j;
}

inline nlohmann::json to_json(const CurationReport& r) {
    return {{"total", r.total}, {"kept", r.kept}, {"dropped", r.dropped}, {"by_reason", r.by_reason}};
}

}  // namespace reshape::dataset
