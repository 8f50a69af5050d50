#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "reshape/service/service.hpp"

namespace reshape::service {

namespace detail {

inline void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

inline void send_png(httplib::Response& res, const std::vector<std::uint8_t>& png) {
    res.status = 200;
    res.set_content(std::string(png.begin(), png.end()), "image/png");
}

/// Runs a handler and maps library errors onto HTTP statuses with a JSON body
/// `{"error": message}`. Backend failures add the attempt log.
inline void guarded(httplib::Response& res, const std::function<void()>& body) {
    try {
        body();
    } catch (const BackendError& e) {
        nlohmann::json attempts = nlohmann::json::array();
        for (const auto& a : e.attempts) attempts.push_back(to_json(a));
        send_json(res, {{"error", e.what()}, {"backend_status", e.status}, {"attempts", attempts}}, 502);
    } catch (const NotFoundError& e) {
        send_json(res, {{"error", e.what()}}, 404);
    } catch (const StateError& e) {
        send_json(res, {{"error", e.what()}}, 409);
    } catch (const ValueError& e) {
        send_json(res, {{"error", e.what()}}, 400);
    } catch (const DimensionError& e) {
        send_json(res, {{"error", e.what()}}, 400);
    } catch (const FormatError& e) {
        send_json(res, {{"error", e.what()}}, 400);
    } catch (const image::ImageCodecError& e) {
        send_json(res, {{"error", e.what()}}, 400);
    } catch (const nlohmann::json::exception& e) {
        send_json(res, {{"error", std::string("malformed JSON: ") + e.what()}}, 400);
    } catch (const std::exception& e) {
        send_json(res, {{"error", e.what()}}, 500);
    }
}

inline nlohmann::json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    return nlohmann::json::parse(req.body);
}

inline std::optional<std::size_t> index_param(const httplib::Request& req, const char* name) {
    if (!req.has_param(name)) return std::nullopt;
    const std::string v = req.get_param_value(name);
    std::size_t used = 0;
    unsigned long long n = 0;
    try {
        n = std::stoull(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw ValueError(std::string("query parameter '") + name + "' must be an index");
    return static_cast<std::size_t>(n);
}

inline std::optional<std::size_t> index_field(const nlohmann::json& j, const char* name) {
    if (!j.contains(name) || j.at(name).is_null()) return std::nullopt;
    return j.at(name).get<std::size_t>();
}

/// Slider request: `{"edits": [...], "values": {name: value}, "base": k}`.
/// `edits` holds objects or "name=value" strings; `values` are absolute.
inline std::vector<semantic::AttributeEdit> parse_slider_edits(const nlohmann::json& j) {
    if (!j.is_object()) throw FormatError("slider request must be a JSON object");
    std::vector<semantic::AttributeEdit> edits;
    if (j.contains("edits")) {
        if (!j.at("edits").is_array()) throw FormatError("'edits' must be an array");
        for (const auto& e : j.at("edits")) edits.push_back(edit_from_json(e));
    }
    if (j.contains("values")) {
        if (!j.at("values").is_object()) throw FormatError("'values' must be an object");
        for (const auto& [name, value] : j.at("values").items()) {
            edits.push_back({name, value.get<double>(), false});
            if (!std::isfinite(edits.back().value)) throw ValueError("value for '" + name + "' is not finite");
        }
    }
    return edits;
}

inline constexpr const char* kProjectPath = "/projects/([0-9a-f]{16})";

inline std::string route(const char* suffix) { return std::string(kProjectPath) + suffix; }

}  // namespace detail

/// Registers the project API on `server`:
///   POST /projects                         reference PNG (raw body or multipart `reference`)
///   POST /projects/{id}/fit                fit document
///   POST /projects/{id}/sliders            slider edits
///   GET  /projects/{id}/conditioning.png   [?entry=k]
///   GET  /projects/{id}/mesh.json          [?entry=k]
///   POST /projects/{id}/generate           {"prompt", "steps", "guidance", "seed", "entry"}
///   GET  /projects/{id}/history
///   GET  /projects/{id}/reference.png
///   GET  /projects/{id}/generations/{k}.png
///   GET  /projects/{id}/replay
///   GET  /projects
///   GET  /healthz
inline void install_routes(httplib::Server& server, Service& svc) {
    using detail::guarded;
    using detail::route;
    using detail::send_json;
    using detail::send_png;

    server.Get("/healthz", [&svc](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, svc.health()); });
    });

    server.Get("/projects", [&svc](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, {{"projects", svc.store().list()}}); });
    });

    server.Post("/projects", [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const std::string& bytes = req.has_file("reference") ? req.get_file_value("reference").content : req.body;
            if (bytes.empty()) throw ValueError("request carries no reference image");
            const auto p = svc.create_project(
                std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
            send_json(res,
                      {{"id", p.id},
                       {"created_at", p.created_at},
                       {"reference", {{"digest", p.reference}, {"width", p.width}, {"height", p.height}}}},
                      201);
        });
    });

    server.Post(route("/fit"), [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto e = svc.import_fit(req.matches[1], detail::parse_body(req));
            send_json(res, to_json(e), 201);
        });
    });

    server.Post(route("/sliders"), [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = detail::parse_body(req);
            const auto e = svc.apply_sliders(req.matches[1], detail::parse_slider_edits(body),
                                             detail::index_field(body, "base"));
            nlohmann::json j = to_json(e);
            j["conditioning_url"] = "/projects/" + std::string(req.matches[1]) + "/conditioning.png?entry=" +
                                    std::to_string(e.index);
            send_json(res, j, 201);
        });
    });

    server.Get(route("/conditioning.png"), [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_png(res, svc.conditioning_png(req.matches[1], detail::index_param(req, "entry"))); });
    });

    server.Get(route("/reference.png"), [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_png(res, svc.reference_png(req.matches[1])); });
    });

    server.Get(route("/generations/([0-9]+)\\.png"), [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            send_png(res, svc.generation_png(req.matches[1], static_cast<std::size_t>(std::stoull(req.matches[2]))));
        });
    });

    server.Get(route("/mesh.json"), [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, svc.mesh_json(req.matches[1], detail::index_param(req, "entry"))); });
    });

    server.Post(route("/generate"), [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = detail::parse_body(req);
            if (!body.is_object() || !body.contains("prompt")) throw ValueError("generate request needs a 'prompt'");
            const auto rec = svc.generate(req.matches[1], body.at("prompt").get<std::string>(),
                                          params_from_json(body), detail::index_field(body, "entry"));
            nlohmann::json j = to_json(rec);
            j["output_url"] = "/projects/" + std::string(req.matches[1]) + "/generations/" +
                              std::to_string(rec.index) + ".png";
            send_json(res, j, 201);
        });
    });

    server.Get(route("/history"), [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, svc.history_json(req.matches[1])); });
    });

    server.Get(route("/replay"), [&svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, to_json(svc.replay(req.matches[1]))); });
    });
}

}  // namespace reshape::service
