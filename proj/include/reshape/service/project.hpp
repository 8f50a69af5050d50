#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "reshape/body/model.hpp"
#include "reshape/render/camera.hpp"
#include "reshape/semantic/mapping.hpp"

namespace reshape::service {

/// The operation needs state the project does not have yet (e.g. a fit).
class StateError : public Error {
public:
    using Error::Error;
};

inline constexpr std::array<std::string_view, 3> kEditPrompts{
    "Make the person fatter", "Make the person thinner", "Make the person muscular"};
inline constexpr std::string_view kNeutralPrompt = "A photo of a person";

inline bool is_canonical_prompt(std::string_view p) {
    return p == kNeutralPrompt || std::find(kEditPrompts.begin(), kEditPrompts.end(), p) != kEditPrompts.end();
}

/// UTC, second resolution, ISO 8601.
inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// One imported body fit. Camera parameters are mandatory.
struct FitRecord {
    std::size_t index = 0;
    std::string imported_at;
    body::ShapeParams shape;
    body::PoseParams pose;
    render::Camera camera;
    std::string source;  // free-form provenance from the fit document
};

/// One step of the edit history: either a fit import or a slider application.
struct HistoryEntry {
    enum class Kind { fit, sliders };

    std::size_t index = 0;
    std::string timestamp;
    Kind kind = Kind::fit;
    std::size_t fit = 0;              // fit this entry's pose and camera come from
    std::optional<std::size_t> base;  // entry the edits were applied to
    std::vector<semantic::AttributeEdit> edits;
    semantic::AttributeVector slider_state;
    Eigen::VectorXd beta;
    std::string conditioning;  // blob digest of the rendered conditioning PNG
};

struct GenerationParams {
    int steps = 50;
    double guidance = 7.5;
    std::uint64_t seed = 0;
};

struct Attempt {
    int number = 0;
    double delay_ms = 0.0;  // wait before this attempt
    std::string outcome;
};

struct GenerationRecord {
    std::size_t index = 0;
    std::string timestamp;
    std::size_t history_entry = 0;
    std::string prompt;
    GenerationParams params;
    std::string reference_digest;
    std::string conditioning_digest;
    std::string request_digest;
    std::string backend;
    std::string status;  // "ok" or "failed"
    std::optional<std::string> output;  // blob digest of the returned PNG
    std::optional<std::string> error;
    nlohmann::json backend_metadata;
    std::vector<Attempt> attempts;
};

struct Project {
    std::string id;
    std::string created_at;
    std::string reference;  // blob digest of the reference PNG
    int width = 0;
    int height = 0;
    std::string model_digest;
    std::string map_digest;
    std::vector<FitRecord> fits;
    std::vector<HistoryEntry> history;
    std::vector<GenerationRecord> generations;

    const HistoryEntry& entry(std::optional<std::size_t> index) const {
        if (history.empty()) throw StateError("project " + id + " has no imported fit");
        if (!index) return history.back();
        if (*index >= history.size()) {
            throw NotFoundError("project " + id + " has no history entry " + std::to_string(*index));
        }
        return history[*index];
    }
};

// ---- JSON ------------------------------------------------------------------

namespace detail {

inline std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline Eigen::VectorXd vector_from(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline const char* kind_name(HistoryEntry::Kind k) { return k == HistoryEntry::Kind::fit ? "fit" : "sliders"; }

inline HistoryEntry::Kind kind_from(const std::string& s) {
    if (s == "fit") return HistoryEntry::Kind::fit;
    if (s == "sliders") return HistoryEntry::Kind::sliders;
    throw FormatError("unknown history entry kind '" + s + "'");
}

}  // namespace detail

inline nlohmann::json to_json(const semantic::AttributeEdit& e) {
    return {{"name", e.name}, {"value", e.value}, {"relative", e.relative}};
}

/// Accepts {"name", "value", "relative"} objects or "name=value" / "name=+delta" strings.
inline semantic::AttributeEdit edit_from_json(const nlohmann::json& j) {
    if (j.is_string()) return semantic::parse_edit(j.get<std::string>());
    semantic::AttributeEdit e;
    e.name = j.at("name").get<std::string>();
    e.value = j.at("value").get<double>();
    e.relative = j.value("relative", false);
    if (!std::isfinite(e.value)) throw ValueError("edit value for '" + e.name + "' is not finite");
    return e;
}

inline nlohmann::json to_json(const FitRecord& f) {
    return {{"index", f.index},
            {"imported_at", f.imported_at},
            {"beta", detail::to_vec(f.shape.beta)},
            {"theta", f.pose.flat()},
            {"camera", render::to_json(f.camera)},
            {"source", f.source}};
}

inline FitRecord fit_record_from_json(const nlohmann::json& j) {
    FitRecord f;
    f.index = j.at("index").get<std::size_t>();
    f.imported_at = j.at("imported_at").get<std::string>();
    f.shape.beta = detail::vector_from(j.at("beta"));
    f.pose = body::PoseParams::from_flat(j.at("theta").get<std::vector<double>>());
    f.camera = render::camera_from_json(j.at("camera"));
    f.source = j.value("source", std::string());
    return f;
}

inline nlohmann::json to_json(const HistoryEntry& e) {
    nlohmann::json edits = nlohmann::json::array();
    for (const auto& ed : e.edits) edits.push_back(to_json(ed));
    return {{"index", e.index},
            {"timestamp", e.timestamp},
            {"kind", detail::kind_name(e.kind)},
            {"fit", e.fit},
            {"base", e.base ? nlohmann::json(*e.base) : nlohmann::json(nullptr)},
            {"edits", edits},
            {"slider_state", semantic::to_json(e.slider_state)},
            {"beta", detail::to_vec(e.beta)},
            {"conditioning", e.conditioning}};
}

inline HistoryEntry history_entry_from_json(const nlohmann::json& j) {
    HistoryEntry e;
    e.index = j.at("index").get<std::size_t>();
    e.timestamp = j.at("timestamp").get<std::string>();
    e.kind = detail::kind_from(j.at("kind").get<std::string>());
    e.fit = j.at("fit").get<std::size_t>();
    if (!j.at("base").is_null()) e.base = j.at("base").get<std::size_t>();
    for (const auto& ed : j.at("edits")) e.edits.push_back(edit_from_json(ed));
    e.slider_state = semantic::attributes_from_json(j.at("slider_state"));
    e.beta = detail::vector_from(j.at("beta"));
    e.conditioning = j.at("conditioning").get<std::string>();
    return e;
}

inline nlohmann::json to_json(const GenerationParams& p) {
    return {{"steps", p.steps}, {"guidance", p.guidance}, {"seed", p.seed}};
}

inline GenerationParams params_from_json(const nlohmann::json& j, GenerationParams defaults = {}) {
    GenerationParams p = defaults;
    p.steps = j.value("steps", p.steps);
    p.guidance = j.value("guidance", p.guidance);
    p.seed = j.value("seed", p.seed);
    if (p.steps <= 0) throw ValueError("steps must be positive");
    if (!std::isfinite(p.guidance) || p.guidance < 0.0) throw ValueError("guidance must be a finite value >= 0");
    return p;
}

inline nlohmann::json to_json(const Attempt& a) {
    return {{"number", a.number}, {"delay_ms", a.delay_ms}, {"outcome", a.outcome}};
}

inline nlohmann::json to_json(const GenerationRecord& g) {
    nlohmann::json attempts = nlohmann::json::array();
    for (const auto& a : g.attempts) attempts.push_back(to_json(a));
    return {{"index", g.index},
            {"timestamp", g.timestamp},
            {"history_entry", g.history_entry},
            {"prompt", g.prompt},
            {"params", to_json(g.params)},
            {"reference_digest", g.reference_digest},
            {"conditioning_digest", g.conditioning_digest},
            {"request_digest", g.request_digest},
            {"backend", g.backend},
            {"status", g.status},
            {"output", g.output ? nlohmann::json(*g.output) : nlohmann::json(nullptr)},
            {"error", g.error ? nlohmann::json(*g.error) : nlohmann::json(nullptr)},
            {"backend_metadata", g.backend_metadata},
            {"attempts", attempts}};
}

inline GenerationRecord generation_from_json(const nlohmann::json& j) {
    GenerationRecord g;
    g.index = j.at("index").get<std::size_t>();
    g.timestamp = j.at("timestamp").get<std::string>();
    g.history_entry = j.at("history_entry").get<std::size_t>();
    g.prompt = j.at("prompt").get<std::string>();
    g.params = params_from_json(j.at("params"));
    g.reference_digest = j.at("reference_digest").get<std::string>();
    g.conditioning_digest = j.at("conditioning_digest").get<std::string>();
    g.request_digest = j.at("request_digest").get<std::string>();
    g.backend = j.value("backend", std::string());
    g.status = j.at("status").get<std::string>();
    if (!j.at("output").is_null()) g.output = j.at("output").get<std::string>();
    if (!j.at("error").is_null()) g.error = j.at("error").get<std::string>();
    g.backend_metadata = j.value("backend_metadata", nlohmann::json::object());
    for (const auto& a : j.at("attempts")) {
        g.attempts.push_back({a.at("number").get<int>(), a.at("delay_ms").get<double>(), a.at("outcome").get<std::string>()});
    }
    return g;
}

inline nlohmann::json to_json(const Project& p) {
    nlohmann::json fits = nlohmann::json::array(), history = nlohmann::json::array(),
                   generations = nlohmann::json::array();
    for (const auto& f : p.fits) fits.push_back(to_json(f));
    for (const auto& e : p.history) history.push_back(to_json(e));
    for (const auto& g : p.generations) generations.push_back(to_json(g));
    return {{"format", "reshape-project"},
            {"version", 1},
            {"id", p.id},
            {"created_at", p.created_at},
            {"reference", {{"digest", p.reference}, {"width", p.width}, {"height", p.height}}},
            {"model_digest", p.model_digest},
            {"map_digest", p.map_digest},
            {"fits", fits},
            {"history", history},
            {"generations", generations}};
}

/// Parses a state document and checks the append-only structure: dense indices,
/// back-references to earlier entries only, generations pointing at real entries.
inline Project project_from_json(const nlohmann::json& j) {
    Project p;
    try {
        if (j.at("format") != "reshape-project") throw FormatError("not a project state document");
        if (j.at("version") != 1) throw FormatError("unsupported project state version");
        p.id = j.at("id").get<std::string>();
        p.created_at = j.at("created_at").get<std::string>();
        p.reference = j.at("reference").at("digest").get<std::string>();
        p.width = j.at("reference").at("width").get<int>();
        p.height = j.at("reference").at("height").get<int>();
        p.model_digest = j.value("model_digest", std::string());
        p.map_digest = j.value("map_digest", std::string());
        for (const auto& f : j.at("fits")) p.fits.push_back(fit_record_from_json(f));
        for (const auto& e : j.at("history")) p.history.push_back(history_entry_from_json(e));
        for (const auto& g : j.at("generations")) p.generations.push_back(generation_from_json(g));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed project state: ") + e.what());
    }
    for (std::size_t i = 0; i < p.fits.size(); ++i) {
        if (p.fits[i].index != i) throw InvariantError("fit indices are not dense");
    }
    for (std::size_t i = 0; i < p.history.size(); ++i) {
        const auto& e = p.history[i];
        if (e.index != i) throw InvariantError("history indices are not dense");
        if (e.fit >= p.fits.size()) throw InvariantError("history entry " + std::to_string(i) + " names a missing fit");
        if (e.kind == HistoryEntry::Kind::sliders && (!e.base || *e.base >= i)) {
            throw InvariantError("history entry " + std::to_string(i) + " must build on an earlier entry");
        }
    }
    for (std::size_t i = 0; i < p.generations.size(); ++i) {
        if (p.generations[i].index != i) throw InvariantError("generation indices are not dense");
        if (p.generations[i].history_entry >= p.history.size()) {
            throw InvariantError("generation " + std::to_string(i) + " references a missing history entry");
        }
    }
    return p;
}

}  // namespace reshape::service
