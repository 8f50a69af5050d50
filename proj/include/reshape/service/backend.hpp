#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "reshape/image/png.hpp"
#include "reshape/service/digest.hpp"
#include "reshape/service/project.hpp"

namespace reshape::service {

/// Response header carrying the backend's JSON metadata next to the PNG body.
inline constexpr const char* kMetadataHeader = "X-Reshape-Metadata";

struct GenerationRequest {
    std::string prompt;
    std::vector<std::uint8_t> reference_png;
    std::vector<std::uint8_t> conditioning_png;
    GenerationParams params;
};

/// SHA-256 over the canonical (sorted-key) JSON of everything that determines
/// an output: prompt, both input digests and the sampler parameters.
inline std::string request_digest(const std::string& prompt, const std::string& reference_digest,
                                  const std::string& conditioning_digest, const GenerationParams& p) {
    const nlohmann::json j{{"prompt", prompt},
                           {"reference", reference_digest},
                           {"conditioning", conditioning_digest},
                           {"steps", p.steps},
                           {"guidance", p.guidance},
                           {"seed", p.seed}};
    return sha256_hex(j.dump());
}

inline std::string request_digest(const GenerationRequest& r) {
    return request_digest(r.prompt, sha256_hex(r.reference_png), sha256_hex(r.conditioning_png), r.params);
}

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds initial_delay{250};
    double factor = 2.0;
    std::chrono::seconds timeout{300};
};

/// The backend failed. `payload` is its response body, untouched; `status` is 0
/// when no HTTP response arrived at all.
class BackendError : public Error {
public:
    BackendError(const std::string& what, int status, std::string payload, std::vector<Attempt> attempts)
        : Error(what), status(status), payload(std::move(payload)), attempts(std::move(attempts)) {}

    int status;
    std::string payload;
    std::vector<Attempt> attempts;
};

struct GenerationResponse {
    std::vector<std::uint8_t> png;
    nlohmann::json metadata;
    std::vector<Attempt> attempts;
};

/// Client for `POST <url>/generate`: multipart with `reference` and
/// `conditioning` PNGs and a `params` JSON part; the reply is a PNG body with
/// metadata in `X-Reshape-Metadata`. Connection failures and 503 are retried with
/// exponential backoff; any other error status is surfaced immediately.
class BackendClient {
public:
    explicit BackendClient(std::string url, RetryPolicy policy = {}) : url_(std::move(url)), policy_(policy) {
        const auto scheme = url_.find("://");
        if (scheme == std::string::npos || url_.compare(0, scheme, "http") != 0) {
            throw ValueError("backend URL '" + url_ + "' must start with http://");
        }
        const auto slash = url_.find('/', scheme + 3);
        origin_ = url_.substr(0, slash);
        prefix_ = slash == std::string::npos ? "" : url_.substr(slash);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }

    const std::string& url() const { return url_; }

    GenerationResponse generate(const GenerationRequest& req) const {
        if (!is_canonical_prompt(req.prompt)) throw ValueError("prompt '" + req.prompt + "' is not a canonical prompt");
        const nlohmann::json params{{"prompt", req.prompt},
                                    {"steps", req.params.steps},
                                    {"guidance", req.params.guidance},
                                    {"seed", req.params.seed}};
        const httplib::MultipartFormDataItems items{
            {"reference", std::string(req.reference_png.begin(), req.reference_png.end()), "reference.png", "image/png"},
            {"conditioning", std::string(req.conditioning_png.begin(), req.conditioning_png.end()), "conditioning.png",
             "image/png"},
            {"params", params.dump(), "params.json", "application/json"},
        };

        std::vector<Attempt> log;
        double delay = 0.0;
        int last_status = 0;
        std::string last_body;
        for (int n = 1; n <= policy_.attempts; ++n) {
            if (n > 1) {
                delay = n == 2 ? static_cast<double>(policy_.initial_delay.count()) : delay * policy_.factor;
                std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay));
            }
            httplib::Client client(origin_);
            client.set_connection_timeout(std::chrono::seconds(5));
            client.set_read_timeout(policy_.timeout);
            client.set_write_timeout(policy_.timeout);
            const auto res = client.Post(prefix_ + "/generate", items);
            if (!res) {
                log.push_back({n, delay, "transport error: " + httplib::to_string(res.error())});
                last_status = 0;
                last_body.clear();
                continue;
            }
            log.push_back({n, delay, "HTTP " + std::to_string(res->status)});
            if (res->status == 503) {
                last_status = 503;
                last_body = res->body;
                continue;
            }
            if (res->status != 200) {
                throw BackendError("backend returned HTTP " + std::to_string(res->status) + ": " + res->body,
                                   res->status, res->body, log);
            }
            nlohmann::json meta = nlohmann::json::object();
            if (res->has_header(kMetadataHeader)) {
                meta = nlohmann::json::parse(res->get_header_value(kMetadataHeader), nullptr, false);
                if (meta.is_discarded()) {
                    throw BackendError("backend metadata header is not JSON", res->status, res->body, log);
                }
            }
            std::vector<std::uint8_t> png(res->body.begin(), res->body.end());
            try {
                (void)image::decode_png(png);
            } catch (const Error& e) {
                throw BackendError(std::string("backend returned an undecodable image: ") + e.what(), res->status,
                                   "", log);
            }
            return {std::move(png), std::move(meta), std::move(log)};
        }
        std::string what = "backend " + url_ + " unavailable after " + std::to_string(policy_.attempts) + " attempts";
        if (!log.empty()) what += " (last: " + log.back().outcome + ")";
        if (!last_body.empty()) what += ": " + last_body;
        throw BackendError(what, last_status, last_body, log);
    }

private:
    std::string url_;
    std::string origin_;
    std::string prefix_;
    RetryPolicy policy_;
};

// ---- loopback stub -----------------------------------------------------------

struct StubOptions {
    std::array<double, 3> tint{1.0, 0.6, 0.35};
    int unavailable_first = 0;  // answer 503 to this many requests before serving
};

/// RGB copy of the conditioning image with each channel scaled by `tint`.
inline image::Image8 tint_image(const image::Image8& src, const std::array<double, 3>& tint) {
    image::Image8 out(src.width, src.height, 3);
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double s = src.at(x, y, src.channels >= 3 ? c : 0) * tint[static_cast<std::size_t>(c)];
                out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(s, 0.0, 255.0)));
            }
        }
    }
    return out;
}

/// Registers `POST /generate` on `server`: validates the request the way a real
/// backend would and answers with the tinted conditioning image.
inline void install_stub_backend(httplib::Server& server, StubOptions options = {}) {
    auto refusals = std::make_shared<std::atomic<int>>(options.unavailable_first);
    auto fail = [](httplib::Response& res, int status, const std::string& msg) {
        res.status = status;
        res.set_content(nlohmann::json{{"error", msg}}.dump(), "application/json");
    };
    server.Post("/generate", [=](const httplib::Request& req, httplib::Response& res) {
        if (refusals->fetch_sub(1) > 0) return fail(res, 503, "stub backend warming up");
        for (const char* part : {"reference", "conditioning", "params"}) {
            if (!req.has_file(part)) return fail(res, 400, std::string("missing multipart field '") + part + "'");
        }
        const auto params = nlohmann::json::parse(req.get_file_value("params").content, nullptr, false);
        if (params.is_discarded() || !params.is_object()) return fail(res, 400, "params is not a JSON object");
        const std::string prompt = params.value("prompt", std::string());
        if (!is_canonical_prompt(prompt)) return fail(res, 422, "unsupported prompt '" + prompt + "'");
        GenerationRequest parsed;
        parsed.prompt = prompt;
        const auto& ref = req.get_file_value("reference").content;
        const auto& cond = req.get_file_value("conditioning").content;
        parsed.reference_png.assign(ref.begin(), ref.end());
        parsed.conditioning_png.assign(cond.begin(), cond.end());
        image::Image8 conditioning;
        try {
            parsed.params = params_from_json(params);
            (void)image::decode_png(parsed.reference_png);
            conditioning = image::decode_png(parsed.conditioning_png);
        } catch (const Error& e) {
            return fail(res, 400, e.what());
        } catch (const nlohmann::json::exception& e) {
            return fail(res, 400, e.what());
        }
        const auto png = image::encode_png(tint_image(conditioning, options.tint));
        const nlohmann::json meta{{"backend", "reshape-stub"},
                                  {"request_digest", request_digest(parsed)},
                                  {"prompt", prompt},
                                  {"params", to_json(parsed.params)},
                                  {"width", conditioning.width},
                                  {"height", conditioning.height}};
        res.set_header(kMetadataHeader, meta.dump());
        res.set_content(std::string(png.begin(), png.end()), "image/png");
    });
}

}  // namespace reshape::service
