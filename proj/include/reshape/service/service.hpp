#pragma once

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reshape/body/container.hpp"
#include "reshape/render/conditioning.hpp"
#include "reshape/semantic/mapping.hpp"
#include "reshape/service/backend.hpp"
#include "reshape/service/store.hpp"

namespace reshape::service {

inline constexpr const char* kVersion = "0.1.0";

struct ServiceConfig {
    std::filesystem::path data_dir = "reshape-data";
    std::filesystem::path model_path;
    std::filesystem::path map_path;
    std::optional<std::string> backend_url;
    RetryPolicy retry;
    unsigned render_threads = 1;

    /// Fills unset fields from RESHAPE_DATA_DIR, RESHAPE_MODEL_PATH,
    /// RESHAPE_MAP_PATH and RESHAPE_BACKEND_URL.
    void apply_environment() {
        auto env = [](const char* name) -> std::optional<std::string> {
            const char* v = std::getenv(name);
            if (v == nullptr || *v == '\0') return std::nullopt;
            return std::string(v);
        };
        if (auto v = env("RESHAPE_DATA_DIR")) data_dir = *v;
        if (auto v = env("RESHAPE_MODEL_PATH"); v && model_path.empty()) model_path = *v;
        if (auto v = env("RESHAPE_MAP_PATH"); v && map_path.empty()) map_path = *v;
        if (auto v = env("RESHAPE_BACKEND_URL"); v && !backend_url) backend_url = *v;
    }
};

/// A fit document as accepted by import_fit:
/// `{"beta": [B], "theta": [3J] or [[x, y, z] × J], "camera": {...}, "source"?: "..."}`.
struct FitDocument {
    body::ShapeParams shape;
    body::PoseParams pose;
    render::Camera camera;
    std::string source;
};

inline FitDocument parse_fit_document(const nlohmann::json& j, const body::BodyModel& model) {
    FitDocument doc;
    try {
        if (!j.is_object()) throw FormatError("fit document must be a JSON object");
        for (const char* key : {"beta", "theta", "camera"}) {
            if (!j.contains(key)) throw FormatError(std::string("fit document lacks '") + key + "'");
        }
        doc.shape.beta = detail::vector_from(j.at("beta"));
        const auto& theta = j.at("theta");
        if (!theta.is_array()) throw FormatError("fit theta must be an array");
        if (!theta.empty() && theta.front().is_array()) {
            std::vector<double> flat;
            for (const auto& row : theta) {
                const auto r = row.get<std::vector<double>>();
                if (r.size() != 3) throw DimensionError("fit theta rows must have 3 entries");
                flat.insert(flat.end(), r.begin(), r.end());
            }
            doc.pose = body::PoseParams::from_flat(flat);
        } else {
            doc.pose = body::PoseParams::from_flat(theta.get<std::vector<double>>());
        }
        doc.camera = render::camera_from_json(j.at("camera"));
        doc.source = j.value("source", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed fit document: ") + e.what());
    }
    if (doc.shape.beta.size() != model.num_betas()) {
        throw DimensionError("fit has " + std::to_string(doc.shape.beta.size()) + " shape coefficients, model has " +
                             std::to_string(model.num_betas()));
    }
    if (doc.pose.theta.rows() != model.num_joints()) {
        throw DimensionError("fit pose has " + std::to_string(doc.pose.theta.rows()) + " joints, model has " +
                             std::to_string(model.num_joints()));
    }
    if (!doc.shape.beta.allFinite() || !doc.pose.theta.allFinite()) throw ValueError("fit contains non-finite values");
    doc.camera.validate();
    return doc;
}

struct ReplayMismatch {
    std::size_t entry = 0;
    std::string what;
};

struct ReplayReport {
    std::size_t entries = 0;
    std::vector<ReplayMismatch> mismatches;

    bool ok() const { return mismatches.empty(); }
};

/// Slider state and β of one history step.
struct EditOutcome {
    semantic::AttributeVector slider_state;
    Eigen::VectorXd beta;
};

/// The deterministic core shared by live editing and replay. Muscularity has no
/// geometric measurement, so its slider value is carried from the edit target.
class Editor {
public:
    Editor(const body::BodyModel& model, const semantic::LinearAttributeMap& map) : model_(model), map_(map) {
        if (map.num_betas() != model.num_betas()) {
            throw DimensionError("attribute map has " + std::to_string(map.num_betas()) +
                                 " shape coefficients, model has " + std::to_string(model.num_betas()));
        }
    }

    EditOutcome from_fit(const Eigen::VectorXd& beta) const {
        return {semantic::slider_state(map_, model_, {beta}), beta};
    }

    EditOutcome apply(const semantic::AttributeVector& base_state, std::span<const semantic::AttributeEdit> edits) const {
        for (const auto& e : edits) {
            if (!map_.has(e.name)) throw ValueError("unknown attribute '" + e.name + "'");
        }
        semantic::AttributeVector target = base_state;
        for (const auto& e : edits) {
            double& slot = target[e.name];
            slot = e.relative ? slot + e.value : e.value;
        }
        EditOutcome out;
        out.beta = map_.beta_for(target);
        out.slider_state = semantic::slider_state(map_, model_, {out.beta});
        out.slider_state.muscularity = target.muscularity;
        return out;
    }

private:
    const body::BodyModel& model_;
    const semantic::LinearAttributeMap& map_;
};

/// Recomputes every history entry from its fit and edits; reports any β or
/// slider state that differs from the stored one in a single bit.
inline ReplayReport replay_history(const Project& p, const body::BodyModel& model,
                                   const semantic::LinearAttributeMap& map) {
    const Editor editor(model, map);
    ReplayReport report;
    std::vector<EditOutcome> replayed;
    for (const auto& e : p.history) {
        EditOutcome o = e.kind == HistoryEntry::Kind::fit ? editor.from_fit(p.fits.at(e.fit).shape.beta)
                                                          : editor.apply(replayed.at(*e.base).slider_state, e.edits);
        const bool same_beta = o.beta.size() == e.beta.size() &&
                               std::memcmp(o.beta.data(), e.beta.data(), sizeof(double) * static_cast<std::size_t>(o.beta.size())) == 0;
        if (!same_beta) report.mismatches.push_back({e.index, "beta differs"});
        if (!(o.slider_state == e.slider_state)) report.mismatches.push_back({e.index, "slider state differs"});
        replayed.push_back(std::move(o));
        ++report.entries;
    }
    return report;
}

inline nlohmann::json to_json(const ReplayReport& r) {
    nlohmann::json mismatches = nlohmann::json::array();
    for (const auto& m : r.mismatches) mismatches.push_back({{"entry", m.entry}, {"what", m.what}});
    return {{"entries", r.entries}, {"ok", r.ok()}, {"mismatches", mismatches}};
}

/// Project operations over a store, a body model and an attribute map. Edits to
/// one project are serialized; reads run concurrently; projects are independent.
class Service {
public:
    Service(body::BodyModel model, semantic::LinearAttributeMap map, const std::filesystem::path& data_dir,
            std::optional<BackendClient> backend = std::nullopt, unsigned render_threads = 1,
            std::string model_digest = {}, std::string map_digest = {})
        : model_(std::move(model)),
          map_(std::move(map)),
          editor_(model_, map_),
          store_(data_dir),
          backend_(std::move(backend)),
          render_threads_(render_threads == 0 ? 1 : render_threads),
          model_digest_(std::move(model_digest)),
          map_digest_(std::move(map_digest)) {
        body::validate(model_);
    }

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Loads model and map from disk; missing or unreadable files are startup errors.
    static std::unique_ptr<Service> open(const ServiceConfig& c) {
        if (c.model_path.empty()) throw ValueError("no body model configured (RESHAPE_MODEL_PATH or --model)");
        if (c.map_path.empty()) throw ValueError("no attribute map configured (RESHAPE_MAP_PATH or --map)");
        if (!std::filesystem::is_regular_file(c.model_path)) {
            throw NotFoundError("model file not found: " + c.model_path.string());
        }
        if (!std::filesystem::is_regular_file(c.map_path)) {
            throw NotFoundError("attribute map not found: " + c.map_path.string());
        }
        const auto model_bytes = image::detail::read_bytes(c.model_path);
        const auto map_bytes = image::detail::read_bytes(c.map_path);
        auto model = body::decode_model(model_bytes);
        nlohmann::json map_json;
        try {
            map_json = nlohmann::json::parse(map_bytes.begin(), map_bytes.end());
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("attribute map " + c.map_path.string() + " is not JSON: " + e.what());
        }
        std::optional<BackendClient> backend;
        if (c.backend_url) backend.emplace(*c.backend_url, c.retry);
        return std::make_unique<Service>(std::move(model), semantic::map_from_json(map_json), c.data_dir,
                                         std::move(backend), c.render_threads, sha256_hex(model_bytes),
                                         sha256_hex(map_bytes));
    }

    const body::BodyModel& model() const { return model_; }
    const semantic::LinearAttributeMap& map() const { return map_; }
    ProjectStore& store() { return store_; }
    const std::optional<BackendClient>& backend() const { return backend_; }

    Project create_project(std::span<const std::uint8_t> png) {
        const image::Image8 img = image::decode_png(std::vector<std::uint8_t>(png.begin(), png.end()));
        Project p;
        p.id = store_.allocate_id();
        auto lock = store_.write_lock(p.id);
        p.created_at = utc_timestamp();
        p.reference = store_.put_blob(p.id, png);
        p.width = img.width;
        p.height = img.height;
        store_.save(p);
        return p;
    }

    Project project(const std::string& id) {
        auto lock = store_.read_lock(id);
        return store_.load(id);
    }

    HistoryEntry import_fit(const std::string& id, const nlohmann::json& document) {
        const FitDocument doc = parse_fit_document(document, model_);
        auto lock = store_.write_lock(id);
        Project p = store_.load(id);
        FitRecord fit{p.fits.size(), utc_timestamp(), doc.shape, doc.pose, doc.camera, doc.source};
        HistoryEntry e;
        e.index = p.history.size();
        e.timestamp = fit.imported_at;
        e.kind = HistoryEntry::Kind::fit;
        e.fit = fit.index;
        const EditOutcome o = editor_.from_fit(doc.shape.beta);
        e.slider_state = o.slider_state;
        e.beta = o.beta;
        e.conditioning = render_blob(p.id, e.beta, fit);
        p.fits.push_back(std::move(fit));
        p.history.push_back(e);
        p.model_digest = model_digest_;
        p.map_digest = map_digest_;
        store_.save(p);
        return e;
    }

    /// Applies slider edits on top of `base` (default: the latest entry). The
    /// pose and camera of the base entry's fit are kept.
    HistoryEntry apply_sliders(const std::string& id, const std::vector<semantic::AttributeEdit>& edits,
                               std::optional<std::size_t> base = std::nullopt) {
        auto lock = store_.write_lock(id);
        Project p = store_.load(id);
        const HistoryEntry& from = p.entry(base);
        const EditOutcome o = editor_.apply(from.slider_state, edits);
        HistoryEntry e;
        e.index = p.history.size();
        e.timestamp = utc_timestamp();
        e.kind = HistoryEntry::Kind::sliders;
        e.fit = from.fit;
        e.base = from.index;
        e.edits = edits;
        e.slider_state = o.slider_state;
        e.beta = o.beta;
        e.conditioning = render_blob(p.id, e.beta, p.fits.at(e.fit));
        p.history.push_back(e);
        store_.save(p);
        return e;
    }

    std::vector<std::uint8_t> conditioning_png(const std::string& id, std::optional<std::size_t> entry = std::nullopt) {
        auto lock = store_.read_lock(id);
        const Project p = store_.load(id);
        return store_.read_blob(id, p.entry(entry).conditioning);
    }

    std::vector<std::uint8_t> reference_png(const std::string& id) {
        auto lock = store_.read_lock(id);
        return store_.read_blob(id, store_.load(id).reference);
    }

    std::vector<std::uint8_t> generation_png(const std::string& id, std::size_t index) {
        auto lock = store_.read_lock(id);
        const Project p = store_.load(id);
        if (index >= p.generations.size()) {
            throw NotFoundError("project " + id + " has no generation " + std::to_string(index));
        }
        const auto& g = p.generations[index];
        if (!g.output) throw NotFoundError("generation " + std::to_string(index) + " has no output (" + g.status + ")");
        return store_.read_blob(id, *g.output);
    }

    /// Posed mesh of a history entry for client-side preview.
    nlohmann::json mesh_json(const std::string& id, std::optional<std::size_t> entry = std::nullopt) {
        auto lock = store_.read_lock(id);
        const Project p = store_.load(id);
        const HistoryEntry& e = p.entry(entry);
        const body::Mesh mesh = body::skin(model_, {e.beta}, p.fits.at(e.fit).pose);
        nlohmann::json vertices = nlohmann::json::array(), faces = nlohmann::json::array();
        for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
            vertices.push_back({mesh.vertices(i, 0), mesh.vertices(i, 1), mesh.vertices(i, 2)});
        }
        for (Eigen::Index f = 0; f < mesh.faces.rows(); ++f) {
            faces.push_back({mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)});
        }
        return {{"project", id}, {"entry", e.index}, {"vertices", vertices}, {"faces", faces}};
    }

    /// Sends the reference and an entry's conditioning image to the backend and
    /// records the outcome. Failed calls are recorded too, with their attempt log.
    GenerationRecord generate(const std::string& id, const std::string& prompt, const GenerationParams& params,
                              std::optional<std::size_t> entry = std::nullopt) {
        if (!is_canonical_prompt(prompt)) throw ValueError("prompt '" + prompt + "' is not a canonical prompt");
        if (!backend_) throw StateError("no generation backend configured (RESHAPE_BACKEND_URL)");
        GenerationRequest req;
        GenerationRecord rec;
        {
            auto lock = store_.read_lock(id);
            const Project p = store_.load(id);
            const HistoryEntry& e = p.entry(entry);
            req.prompt = prompt;
            req.params = params;
            req.reference_png = store_.read_blob(id, p.reference);
            req.conditioning_png = store_.read_blob(id, e.conditioning);
            rec.history_entry = e.index;
            rec.reference_digest = p.reference;
            rec.conditioning_digest = e.conditioning;
        }
        rec.prompt = prompt;
        rec.params = params;
        rec.request_digest = request_digest(prompt, rec.reference_digest, rec.conditioning_digest, params);
        rec.backend = backend_->url();
        std::optional<BackendError> failure;
        try {
            auto res = backend_->generate(req);
            rec.status = "ok";
            rec.output = store_.put_blob(id, res.png);
            rec.backend_metadata = std::move(res.metadata);
            rec.attempts = std::move(res.attempts);
        } catch (const BackendError& e) {
            rec.status = "failed";
            rec.error = e.what();
            rec.attempts = e.attempts;
            rec.backend_metadata = nlohmann::json::object();
            failure = e;
        }
        {
            auto lock = store_.write_lock(id);
            Project p = store_.load(id);
            rec.index = p.generations.size();
            rec.timestamp = utc_timestamp();
            p.generations.push_back(rec);
            store_.save(p);
        }
        if (failure) throw *failure;
        return rec;
    }

    /// Everything a client needs to rebuild its state: attribute names, slider
    /// ranges, prompts, fits, history and generations.
    nlohmann::json history_json(const std::string& id) {
        auto lock = store_.read_lock(id);
        const Project p = store_.load(id);
        nlohmann::json j = to_json(p);
        nlohmann::json ranges = nlohmann::json::object();
        for (const auto& name : map_.attribute_names) {
            const auto [lo, hi] = map_.range(name);
            ranges[name] = {lo, hi};
        }
        std::vector<std::string> prompts(kEditPrompts.begin(), kEditPrompts.end());
        prompts.emplace_back(kNeutralPrompt);
        j["attributes"] = map_.attribute_names;
        j["slider_ranges"] = ranges;
        j["prompts"] = prompts;
        j["latest"] = p.history.empty() ? nlohmann::json(nullptr) : nlohmann::json(p.history.back().index);
        return j;
    }

    ReplayReport replay(const std::string& id) {
        auto lock = store_.read_lock(id);
        const Project p = store_.load(id);
        ReplayReport r = replay_history(p, model_, map_);
        if (!p.model_digest.empty() && !model_digest_.empty() && p.model_digest != model_digest_) {
            r.mismatches.push_back({0, "project was edited with a different body model"});
        }
        if (!p.map_digest.empty() && !map_digest_.empty() && p.map_digest != map_digest_) {
            r.mismatches.push_back({0, "project was edited with a different attribute map"});
        }
        return r;
    }

    nlohmann::json health() const {
        return {{"status", "ok"},
                {"version", kVersion},
                {"model",
                 {{"vertices", model_.num_vertices()},
                  {"faces", model_.faces.rows()},
                  {"joints", model_.num_joints()},
                  {"betas", model_.num_betas()},
                  {"digest", model_digest_}}},
                {"map", {{"attributes", map_.attribute_names}, {"digest", map_digest_}}},
                {"backend", backend_ ? nlohmann::json(backend_->url()) : nlohmann::json(nullptr)},
                {"generation_defaults",
                 {{"params", to_json(GenerationParams{})},
                  {"image_size", {768, 1024}},
                  {"training_provenance",
                   {{"optimizer", "Adam"},
                    {"learning_rate", 1e-5},
                    {"betas", {0.9, 0.999}},
                    {"weight_decay", 1e-2},
                    {"epsilon", 1e-4},
                    {"epochs", 60}}}}}};
    }

private:
    std::string render_blob(const std::string& id, const Eigen::VectorXd& beta, const FitRecord& fit) {
        const auto img = render::render_conditioning(model_, {beta}, fit.pose, fit.camera, render_threads_);
        return store_.put_blob(id, image::encode_png(img));
    }

    body::BodyModel model_;
    semantic::LinearAttributeMap map_;
    Editor editor_;
    ProjectStore store_;
    std::optional<BackendClient> backend_;
    unsigned render_threads_;
    std::string model_digest_;
    std::string map_digest_;
};

}  // namespace reshape::service
