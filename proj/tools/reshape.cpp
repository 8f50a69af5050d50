// reshape: command-line front end for the body model, attribute map, renderer,
// attention self-check, dataset tools, benchmark and project service.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "reshape/attention/selfcheck.hpp"
#include "reshape/body/container.hpp"
#include "reshape/body/test_model.hpp"
#include "reshape/dataset/triplet.hpp"
#include "reshape/eval/report.hpp"
#include "reshape/render/conditioning.hpp"
#include "reshape/semantic/mapping.hpp"
#include "reshape/service/http.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace reshape;

namespace {

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

/// A β file is a JSON array or an object with a "beta" array.
body::ShapeParams read_beta(const fs::path& path) {
    const json j = read_json(path);
    const json& a = j.is_object() ? j.at("beta") : j;
    const auto v = a.get<std::vector<double>>();
    return {Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))};
}

/// A θ file is a flat 3J array, a J×3 nested array, or an object with "theta".
body::PoseParams read_theta(const fs::path& path) {
    const json j = read_json(path);
    const json& a = j.is_object() ? j.at("theta") : j;
    std::vector<double> flat;
    for (const auto& v : a) {
        if (v.is_array()) {
            for (const auto& x : v) flat.push_back(x.get<double>());
        } else {
            flat.push_back(v.get<double>());
        }
    }
    return body::PoseParams::from_flat(flat);
}

semantic::LinearAttributeMap read_map(const fs::path& path) { return semantic::map_from_json(read_json(path)); }

fs::path model_path_or_env(const std::string& given) {
    if (!given.empty()) return given;
    if (const char* env = std::getenv("RESHAPE_MODEL_PATH"); env != nullptr && *env != '\0') return env;
    throw ValueError("no body model given (--model or RESHAPE_MODEL_PATH)");
}

std::string server_url(const std::string& given) {
    if (!given.empty()) return given;
    if (const char* env = std::getenv("RESHAPE_SERVER_URL"); env != nullptr && *env != '\0') return env;
    return "http://127.0.0.1:8080";
}

// ---- HTTP client helpers for the project subcommands ---------------------------

struct Reply {
    int status = 0;
    std::string body;
    std::string content_type;
};

Reply check(const httplib::Result& r, const std::string& what) {
    if (!r) throw Error(what + ": cannot reach service (" + httplib::to_string(r.error()) + ")");
    Reply out{r->status, r->body, r->get_header_value("Content-Type")};
    if (r->status < 200 || r->status >= 300) {
        std::string msg = r->body;
        const json j = json::parse(r->body, nullptr, false);
        if (!j.is_discarded() && j.is_object() && j.contains("error")) msg = j.at("error").get<std::string>();
        throw Error(what + ": HTTP " + std::to_string(r->status) + ": " + msg);
    }
    return out;
}

void print_json(const std::string& body) { std::cout << json::parse(body).dump(2) << '\n'; }

void save_body(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(body.data(), static_cast<std::streamsize>(body.size()));
}

std::string entry_query(int entry) { return entry >= 0 ? "?entry=" + std::to_string(entry) : ""; }

// ---- serving --------------------------------------------------------------------

/// Blocks SIGINT/SIGTERM in every thread and stops `server` from a dedicated
/// waiter thread when one arrives, so shutdown runs outside signal context.
void stop_on_signal(httplib::Server& server) {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    std::thread([set, &server]() mutable {
        int sig = 0;
        sigwait(&set, &sig);
        std::fprintf(stderr, "received signal %d, shutting down\n", sig);
        server.stop();
    }).detach();
}

int listen_and_report(httplib::Server& server, const std::string& host, int port, const char* what) {
    const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error("cannot listen on " + host + ":" + std::to_string(port) + " (port in use?)");
    std::printf("%s listening on http://%s:%d\n", what, host.c_str(), bound);
    std::fflush(stdout);
    stop_on_signal(server);
    return server.listen_after_bind() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Body-shape editing toolkit: body model, semantic sliders, depth conditioning, "
                 "benchmark and project service."};
    app.require_subcommand(1);
    app.set_version_flag("--version", service::kVersion);
    std::function<void()> action;

    // model ---------------------------------------------------------------------
    auto* model_cmd = app.add_subcommand("model", "Body-model container files")->require_subcommand(1);
    std::string inspect_file;
    auto* inspect = model_cmd->add_subcommand("inspect", "Print dimensions and invariant checks");
    inspect->add_option("file", inspect_file, "Model container")->required();
    inspect->callback([&] {
        action = [&] {
            const auto bytes = image::detail::read_bytes(inspect_file);
            const body::BodyModel m = body::decode_model(bytes);
            const auto problems = body::invariant_violations(m);
            json j{{"file", inspect_file},
                   {"sha256", service::sha256_hex(bytes)},
                   {"vertices", m.num_vertices()},
                   {"faces", m.faces.rows()},
                   {"joints", m.num_joints()},
                   {"betas", m.num_betas()},
                   {"pose_dirs", m.pose_dirs.cols()},
                   {"invariants_ok", problems.empty()},
                   {"violations", problems}};
            std::cout << j.dump(2) << '\n';
            if (!problems.empty()) throw InvariantError(std::to_string(problems.size()) + " invariant violation(s)");
        };
    });
    std::string make_out;
    std::uint64_t make_seed = 0;
    auto* make_test = model_cmd->add_subcommand("make-test", "Write the procedural mini-model");
    make_test->add_option("--out", make_out, "Output container")->required();
    make_test->add_option("--seed", make_seed, "Generator seed");
    make_test->callback([&] {
        action = [&] {
            const auto m = body::make_test_model(make_seed);
            body::save_model(m, make_out);
            std::printf("wrote %s (V=%ld, J=%ld, B=%ld)\n", make_out.c_str(), static_cast<long>(m.num_vertices()),
                        static_cast<long>(m.num_joints()), static_cast<long>(m.num_betas()));
        };
    });

    // map ---------------------------------------------------------------------
    auto* map_cmd = app.add_subcommand("map", "Semantic attribute map")->require_subcommand(1);
    std::string sample_model, sample_out;
    std::size_t sample_count = 500;
    std::uint64_t sample_seed = 0;
    double sample_range = 2.0;
    auto* sample = map_cmd->add_subcommand("sample", "Draw random shapes and measure them (JSON lines)");
    sample->add_option("--model", sample_model, "Model container")->required();
    sample->add_option("--count", sample_count, "Number of samples");
    sample->add_option("--seed", sample_seed, "Sampler seed");
    sample->add_option("--range", sample_range, "β drawn uniformly in [-range, range]");
    sample->add_option("--out", sample_out, "Output JSON-lines corpus")->required();
    sample->callback([&] {
        action = [&] {
            const auto corpus = semantic::sample_corpus(body::load_model(sample_model), sample_count, sample_seed,
                                                        sample_range);
            semantic::write_samples(sample_out, corpus);
            std::printf("wrote %zu samples to %s\n", corpus.size(), sample_out.c_str());
        };
    });
    std::string fit_samples, fit_out;
    double fit_lambda = 1e-4;
    auto* fit = map_cmd->add_subcommand("fit", "Fit β as an affine function of attributes");
    fit->add_option("--samples", fit_samples, "JSON-lines corpus")->required();
    fit->add_option("--lambda", fit_lambda, "Ridge strength (0 for plain least squares)");
    fit->add_option("--out", fit_out, "Output map JSON")->required();
    fit->callback([&] {
        action = [&] {
            const auto samples = semantic::read_samples(fit_samples);
            const auto map = semantic::fit_map(samples, fit_lambda);
            write_text(fit_out, semantic::to_json(map).dump(2) + "\n");
            std::printf("fitted %zu samples, residual %.6g, wrote %s\n", samples.size(), map.residual, fit_out.c_str());
        };
    });
    std::string apply_map, apply_model, apply_beta, apply_out;
    std::vector<std::string> apply_edits;
    auto* apply = map_cmd->add_subcommand("apply", "Apply slider edits to a β");
    apply->add_option("--map", apply_map, "Map JSON")->required();
    apply->add_option("--model", apply_model, "Model container (default RESHAPE_MODEL_PATH)");
    apply->add_option("--beta", apply_beta, "β JSON")->required();
    apply->add_option("--edit", apply_edits, "name=value (absolute) or name=+delta / name=-delta");
    apply->add_option("--out", apply_out, "Write the new β JSON here");
    apply->callback([&] {
        action = [&] {
            const auto model = body::load_model(model_path_or_env(apply_model));
            const auto map = read_map(apply_map);
            const auto beta = read_beta(apply_beta);
            std::vector<semantic::AttributeEdit> edits;
            for (const auto& e : apply_edits) edits.push_back(semantic::parse_edit(e));
            const auto out = semantic::attributes_to_beta(map, model, beta, edits);
            std::vector<double> b(out.beta.data(), out.beta.data() + out.beta.size());
            const json j{{"beta", b},
                         {"before", semantic::to_json(semantic::slider_state(map, model, beta))},
                         {"after", semantic::to_json(semantic::slider_state(map, model, out))}};
            if (!apply_out.empty()) write_text(apply_out, json{{"beta", b}}.dump(2) + "\n");
            std::cout << j.dump(2) << '\n';
        };
    });

    // render ---------------------------------------------------------------------
    std::string r_model, r_beta, r_theta, r_camera, r_out, r_depth;
    unsigned r_threads = std::max(1u, std::thread::hardware_concurrency());
    auto* render_cmd = app.add_subcommand("render", "Render the 8-bit conditioning image (and 16-bit depth)");
    render_cmd->add_option("--model", r_model, "Model container (default RESHAPE_MODEL_PATH)");
    render_cmd->add_option("--beta", r_beta, "β JSON (default zeros)");
    render_cmd->add_option("--theta", r_theta, "θ JSON (default rest pose)");
    render_cmd->add_option("--camera", r_camera, "Camera JSON")->required();
    render_cmd->add_option("--out", r_out, "Conditioning PNG")->required();
    render_cmd->add_option("--depth-out", r_depth, "16-bit depth PNG in millimeters");
    render_cmd->add_option("--threads", r_threads, "Rasterizer threads");
    render_cmd->callback([&] {
        action = [&] {
            const auto model = body::load_model(model_path_or_env(r_model));
            const auto beta = r_beta.empty() ? body::ShapeParams::zero(model.num_betas()) : read_beta(r_beta);
            const auto theta = r_theta.empty() ? body::PoseParams::zero(model.num_joints()) : read_theta(r_theta);
            const auto cam = render::camera_from_json(read_json(r_camera));
            const auto depth = render::render_depth(model, beta, theta, cam, r_threads);
            image::write_png(r_out, render::normalize_for_conditioning(depth));
            if (!r_depth.empty()) image::write_png16(r_depth, render::depth_to_millimeters(depth));
            std::printf("rendered %dx%d, %zu foreground pixels -> %s\n", depth.width, depth.height,
                        depth.foreground_count(), r_out.c_str());
        };
    });

    std::string cam_out;
    double cam_center = 0.9, cam_distance = 3.0, cam_focal = 1000.0;
    int cam_w = 768, cam_h = 1024;
    auto* camera_cmd = app.add_subcommand("camera", "Camera JSON helpers")->require_subcommand(1);
    auto* frontal = camera_cmd->add_subcommand("frontal", "Write a pinhole camera facing the body from the front");
    frontal->add_option("--center-y", cam_center, "Optical-axis height on the body (m)");
    frontal->add_option("--distance", cam_distance, "Camera distance (m)");
    frontal->add_option("--focal", cam_focal, "Focal length (px)");
    frontal->add_option("--width", cam_w, "Image width");
    frontal->add_option("--height", cam_h, "Image height");
    frontal->add_option("--out", cam_out, "Output camera JSON")->required();
    frontal->callback([&] {
        action = [&] {
            const auto cam = render::Camera::frontal(cam_center, cam_distance, cam_focal, cam_w, cam_h);
            write_text(cam_out, render::to_json(cam).dump(2) + "\n");
        };
    });

    // attn ---------------------------------------------------------------------
    auto* attn = app.add_subcommand("attn", "Reference attention equations")->require_subcommand(1);
    std::uint64_t attn_seed = 0;
    auto* selfcheck = attn->add_subcommand("selfcheck", "Run the attention/denoiser invariant suite");
    selfcheck->add_option("--seed", attn_seed, "Random seed");
    selfcheck->callback([&] {
        action = [&] {
            const auto results = attention::run_selfcheck(attn_seed);
            int failed = 0;
            for (const auto& r : results) {
                std::printf("%s  %-32s %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
                failed += r.passed ? 0 : 1;
            }
            if (failed > 0) throw Error(std::to_string(failed) + " self-check(s) failed");
        };
    });

    // dataset ---------------------------------------------------------------------
    auto* dataset = app.add_subcommand("dataset", "Triplet dataset tools")->require_subcommand(1);
    std::string n_manifest, n_out;
    auto* normalize = dataset->add_subcommand("normalize", "Rescale and re-anchor every triplet");
    normalize->add_option("--manifest", n_manifest, "JSON-lines manifest")->required();
    normalize->add_option("--out", n_out, "Output directory")->required();
    normalize->callback([&] {
        action = [&] {
            const auto records = dataset::read_manifest(n_manifest);
            const fs::path base = fs::path(n_manifest).parent_path();
            fs::create_directories(n_out);
            std::vector<dataset::TripletRecord> written;
            std::size_t clipped = 0;
            for (const auto& r : records) {
                const auto norm = dataset::normalize_triplet(dataset::load_triplet(r, base));
                written.push_back(dataset::save_triplet(norm.triplet, n_out));
                for (auto t : norm.clipped) {
                    std::fprintf(stderr, "warning: %s/%s was clipped by the canvas\n", r.identity.c_str(),
                                 dataset::label(t));
                    ++clipped;
                }
            }
            dataset::write_manifest(fs::path(n_out) / "manifest.jsonl", written);
            std::printf("normalized %zu triplets (%zu clipped members) -> %s\n", written.size(), clipped,
                        n_out.c_str());
        };
    });
    std::string p_manifest, p_flags, p_out;
    auto* pairs = dataset->add_subcommand("pairs", "Enumerate and curate transformation pairs");
    pairs->add_option("--manifest", p_manifest, "JSON-lines manifest")->required();
    pairs->add_option("--flags", p_flags, "JSON-lines curation flags");
    pairs->add_option("--out", p_out, "Output JSON-lines pair list")->required();
    pairs->callback([&] {
        action = [&] {
            std::vector<dataset::TransformationPair> all;
            for (const auto& r : dataset::read_manifest(p_manifest)) {
                auto p = dataset::enumerate_pairs(r.identity, r.present());
                all.insert(all.end(), p.begin(), p.end());
            }
            const auto flags = p_flags.empty() ? std::vector<dataset::CurationFlag>{} : dataset::read_flags(p_flags);
            const auto report = dataset::apply_curation(all, flags);
            std::ofstream out(p_out);
            if (!out) throw Error("cannot write " + p_out);
            for (const auto& p : all) out << dataset::to_json(p).dump() << '\n';
            std::cout << dataset::to_json(report).dump(2) << '\n';
        };
    });

    // bench ---------------------------------------------------------------------
    auto* bench = app.add_subcommand("bench", "Shape-editing benchmark")->require_subcommand(1);
    std::string b_pred, b_gt, b_fits, b_lpips, b_out, b_model, b_text, b_scale = "least-squares";
    auto* run = bench->add_subcommand("run", "Score predictions against ground truth");
    run->add_option("--pred", b_pred, "Predicted images directory")->required();
    run->add_option("--gt", b_gt, "Ground-truth images directory")->required();
    run->add_option("--fits", b_fits, "Per-pair β fits directory (<stem>.json)")->required();
    run->add_option("--lpips", b_lpips, "Optional LPIPS scores JSON");
    run->add_option("--out", b_out, "Report JSON")->required();
    run->add_option("--text", b_text, "Also write the aligned text table here");
    run->add_option("--model", b_model, "Model container (default RESHAPE_MODEL_PATH)");
    run->add_option("--scale", b_scale, "PVE-T-SC scale correction")
        ->check(CLI::IsMember({"least-squares", "height"}));
    run->callback([&] {
        action = [&] {
            const auto model = body::load_model(model_path_or_env(b_model));
            const auto scale = b_scale == "height" ? eval::ScaleCorrection::height : eval::ScaleCorrection::least_squares;
            const auto report =
                eval::evaluate(b_pred, b_gt, b_fits, model,
                               b_lpips.empty() ? std::nullopt : std::optional<fs::path>(b_lpips), scale);
            write_text(b_out, eval::to_json(report).dump(2) + "\n");
            const std::string table = eval::to_text(report);
            if (!b_text.empty()) write_text(b_text, table);
            std::cout << table;
        };
    });

    // serve / stub-backend ---------------------------------------------------------
    service::ServiceConfig cfg;
    std::string s_host = "127.0.0.1", s_data, s_model, s_map, s_backend;
    int s_port = 8080;
    auto* serve = app.add_subcommand("serve", "Run the project service");
    serve->add_option("--host", s_host, "Bind address");
    serve->add_option("--port", s_port, "Port (0 picks a free one)");
    serve->add_option("--data", s_data, "Data directory (default RESHAPE_DATA_DIR)");
    serve->add_option("--model", s_model, "Model container (default RESHAPE_MODEL_PATH)");
    serve->add_option("--map", s_map, "Attribute map JSON (default RESHAPE_MAP_PATH)");
    serve->add_option("--backend", s_backend, "Generation backend URL (default RESHAPE_BACKEND_URL)");
    serve->add_option("--threads", cfg.render_threads, "Rasterizer threads per render");
    serve->callback([&] {
        action = [&] {
            if (!s_model.empty()) cfg.model_path = s_model;
            if (!s_map.empty()) cfg.map_path = s_map;
            if (!s_backend.empty()) cfg.backend_url = s_backend;
            cfg.apply_environment();
            if (!s_data.empty()) cfg.data_dir = s_data;
            auto svc = service::Service::open(cfg);
            httplib::Server server;
            service::install_routes(server, *svc);
            std::fprintf(stderr, "data %s, model %s, map %s, backend %s\n", cfg.data_dir.c_str(),
                         cfg.model_path.c_str(), cfg.map_path.c_str(),
                         cfg.backend_url ? cfg.backend_url->c_str() : "(none)");
            if (listen_and_report(server, s_host, s_port, "reshape service") != 0) throw Error("server stopped abnormally");
        };
    });
    std::string st_host = "127.0.0.1";
    int st_port = 8091;
    auto* stub = app.add_subcommand("stub-backend", "Run the loopback generation backend (tints the conditioning image)");
    stub->add_option("--host", st_host, "Bind address");
    stub->add_option("--port", st_port, "Port (0 picks a free one)");
    stub->callback([&] {
        action = [&] {
            httplib::Server server;
            service::install_stub_backend(server);
            if (listen_and_report(server, st_host, st_port, "stub backend") != 0) throw Error("server stopped abnormally");
        };
    });

    // project / health: HTTP client mirroring the service endpoints ------------------
    std::string url;
    auto* health = app.add_subcommand("health", "GET /healthz");
    health->add_option("--server", url, "Service URL (default RESHAPE_SERVER_URL or http://127.0.0.1:8080)");
    health->callback([&] {
        action = [&] {
            httplib::Client c(server_url(url));
            print_json(check(c.Get("/healthz"), "health").body);
        };
    });

    auto* project = app.add_subcommand("project", "Talk to a running service")->require_subcommand(1);
    project->add_option("--server", url, "Service URL (default RESHAPE_SERVER_URL or http://127.0.0.1:8080)");
    std::string pid, p_image, p_fit, p_prompt, p_outfile;
    std::vector<std::string> p_edits;
    int p_base = -1, p_entry = -1, p_steps = 50;
    double p_guidance = 7.5;
    std::uint64_t p_seed = 0;

    auto* create = project->add_subcommand("create", "POST /projects");
    create->add_option("--image", p_image, "Reference PNG")->required();
    create->callback([&] {
        action = [&] {
            const auto bytes = image::detail::read_bytes(p_image);
            httplib::Client c(server_url(url));
            print_json(check(c.Post("/projects", std::string(bytes.begin(), bytes.end()), "image/png"), "create").body);
        };
    });
    auto* pfit = project->add_subcommand("fit", "POST /projects/{id}/fit");
    pfit->add_option("id", pid, "Project id")->required();
    pfit->add_option("--fit", p_fit, "Fit document JSON")->required();
    pfit->callback([&] {
        action = [&] {
            httplib::Client c(server_url(url));
            print_json(check(c.Post("/projects/" + pid + "/fit", read_json(p_fit).dump(), "application/json"), "fit").body);
        };
    });
    auto* psliders = project->add_subcommand("sliders", "POST /projects/{id}/sliders");
    psliders->add_option("id", pid, "Project id")->required();
    psliders->add_option("--edit", p_edits, "name=value or name=+delta (repeatable)");
    psliders->add_option("--base", p_base, "History entry to edit from (default latest)");
    psliders->callback([&] {
        action = [&] {
            json body{{"edits", p_edits}};
            if (p_base >= 0) body["base"] = p_base;
            httplib::Client c(server_url(url));
            print_json(check(c.Post("/projects/" + pid + "/sliders", body.dump(), "application/json"), "sliders").body);
        };
    });
    auto* pgen = project->add_subcommand("generate", "POST /projects/{id}/generate");
    pgen->add_option("id", pid, "Project id")->required();
    pgen->add_option("--prompt", p_prompt, "One of the canonical prompts")->required();
    pgen->add_option("--steps", p_steps, "Sampler steps");
    pgen->add_option("--guidance", p_guidance, "Guidance scale");
    pgen->add_option("--seed", p_seed, "Sampler seed");
    pgen->add_option("--entry", p_entry, "History entry (default latest)");
    pgen->add_option("--out", p_outfile, "Also download the generated PNG here");
    pgen->callback([&] {
        action = [&] {
            json body{{"prompt", p_prompt}, {"steps", p_steps}, {"guidance", p_guidance}, {"seed", p_seed}};
            if (p_entry >= 0) body["entry"] = p_entry;
            httplib::Client c(server_url(url));
            c.set_read_timeout(std::chrono::minutes(10));
            const auto r = check(c.Post("/projects/" + pid + "/generate", body.dump(), "application/json"), "generate");
            print_json(r.body);
            if (!p_outfile.empty()) {
                const auto rec = json::parse(r.body);
                save_body(p_outfile, check(c.Get(rec.at("output_url").get<std::string>()), "download").body);
            }
        };
    });
    auto* phist = project->add_subcommand("history", "GET /projects/{id}/history");
    phist->add_option("id", pid, "Project id")->required();
    phist->callback([&] {
        action = [&] {
            httplib::Client c(server_url(url));
            print_json(check(c.Get("/projects/" + pid + "/history"), "history").body);
        };
    });
    auto* pcond = project->add_subcommand("conditioning", "GET /projects/{id}/conditioning.png");
    pcond->add_option("id", pid, "Project id")->required();
    pcond->add_option("--entry", p_entry, "History entry (default latest)");
    pcond->add_option("--out", p_outfile, "Output PNG")->required();
    pcond->callback([&] {
        action = [&] {
            httplib::Client c(server_url(url));
            save_body(p_outfile, check(c.Get("/projects/" + pid + "/conditioning.png" + entry_query(p_entry)),
                                       "conditioning").body);
            std::printf("wrote %s\n", p_outfile.c_str());
        };
    });
    auto* pmesh = project->add_subcommand("mesh", "GET /projects/{id}/mesh.json");
    pmesh->add_option("id", pid, "Project id")->required();
    pmesh->add_option("--entry", p_entry, "History entry (default latest)");
    pmesh->add_option("--out", p_outfile, "Output JSON (default stdout)");
    pmesh->callback([&] {
        action = [&] {
            httplib::Client c(server_url(url));
            const auto r = check(c.Get("/projects/" + pid + "/mesh.json" + entry_query(p_entry)), "mesh");
            if (p_outfile.empty()) {
                print_json(r.body);
            } else {
                save_body(p_outfile, r.body);
            }
        };
    });
    auto* preplay = project->add_subcommand("replay", "GET /projects/{id}/replay (bit-exact history check)");
    preplay->add_option("id", pid, "Project id")->required();
    preplay->callback([&] {
        action = [&] {
            httplib::Client c(server_url(url));
            const auto r = check(c.Get("/projects/" + pid + "/replay"), "replay");
            print_json(r.body);
            if (!json::parse(r.body).at("ok").get<bool>()) throw Error("replay found mismatches");
        };
    });

    CLI11_PARSE(app, argc, argv);
    try {
        action();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
