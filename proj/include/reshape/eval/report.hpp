#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reshape/eval/metrics.hpp"
#include "reshape/image/png.hpp"

namespace reshape::eval {

struct EvalRow {
    std::string name;
    double ssim = 0.0;
    double psnr = 0.0;  // +∞ for identical images
    double pve_t_sc_mm = 0.0;
    std::optional<double> lpips;
};

struct EvalMeans {
    double ssim = 0.0;
    double psnr = 0.0;  // +∞ if any row is +∞
    double pve_t_sc_mm = 0.0;
    std::optional<double> lpips;  // over rows that have a score
};

struct EvalReport {
    std::vector<EvalRow> rows;
    EvalMeans mean;
    std::size_t psnr_infinite = 0;
    std::size_t lpips_count = 0;
    ScaleCorrection scale = ScaleCorrection::least_squares;
};

inline EvalMeans compute_means(const std::vector<EvalRow>& rows) {
    EvalMeans m;
    if (rows.empty()) return m;
    double lp = 0.0;
    std::size_t lp_n = 0;
    for (const auto& r : rows) {
        m.ssim += r.ssim;
        m.psnr += r.psnr;
        m.pve_t_sc_mm += r.pve_t_sc_mm;
        if (r.lpips) {
            lp += *r.lpips;
            ++lp_n;
        }
    }
    const double n = static_cast<double>(rows.size());
    m.ssim /= n;
    m.psnr /= n;
    m.pve_t_sc_mm /= n;
    if (lp_n > 0) m.lpips = lp / static_cast<double>(lp_n);
    return m;
}

/// Shape fit for one image pair: `{"beta_pred": [...], "beta_gt": [...]}`.
struct PairFit {
    body::ShapeParams pred;
    body::ShapeParams gt;
};

inline PairFit read_pair_fit(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("missing fit " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        auto vec = [](const nlohmann::json& a) {
            const auto v = a.get<std::vector<double>>();
            return body::ShapeParams{Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))};
        };
        return {vec(j.at("beta_pred")), vec(j.at("beta_gt"))};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("unreadable fit " + path.string() + ": " + e.what());
    }
}

/// Optional externally computed LPIPS scores: a JSON object {file name: score}.
inline std::map<std::string, double> read_lpips(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("missing LPIPS file " + path.string());
    try {
        return nlohmann::json::parse(in).get<std::map<std::string, double>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("unreadable LPIPS file " + path.string() + ": " + e.what());
    }
}

namespace detail {

inline std::vector<std::string> png_names(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw NotFoundError("not a directory: " + dir.string());
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path().filename().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

/// Scores every ground-truth image against the same-named prediction. Shape
/// error uses `<fits>/<stem>.json`. Rows are ordered by file name.
inline EvalReport evaluate(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                           const std::filesystem::path& fits_dir, const body::BodyModel& model,
                           const std::optional<std::filesystem::path>& lpips_file = std::nullopt,
                           ScaleCorrection scale = ScaleCorrection::least_squares) {
    const auto gt_names = detail::png_names(gt_dir);
    const auto pred_names = detail::png_names(pred_dir);
    for (const auto& n : gt_names) {
        if (!std::binary_search(pred_names.begin(), pred_names.end(), n)) {
            throw NotFoundError("missing prediction " + (pred_dir / n).string());
        }
    }
    for (const auto& n : pred_names) {
        if (!std::binary_search(gt_names.begin(), gt_names.end(), n)) {
            throw NotFoundError("missing ground truth " + (gt_dir / n).string());
        }
    }
    const auto lpips = lpips_file ? read_lpips(*lpips_file) : std::map<std::string, double>{};

    EvalReport report;
    report.scale = scale;
    for (const auto& n : gt_names) {
        const Image8 pred = image::read_png(pred_dir / n);
        const Image8 gt = image::read_png(gt_dir / n);
        const PairFit fit = read_pair_fit(fits_dir / (std::filesystem::path(n).stem().string() + ".json"));
        EvalRow row{n, ssim(pred, gt), psnr(pred, gt), pve_t_sc(fit.pred, fit.gt, model, scale), std::nullopt};
        if (const auto it = lpips.find(n); it != lpips.end()) {
            row.lpips = it->second;
            ++report.lpips_count;
        }
        if (std::isinf(row.psnr)) ++report.psnr_infinite;
        report.rows.push_back(std::move(row));
    }
    report.mean = compute_means(report.rows);
    return report;
}

namespace detail {

// Non-finite values have no JSON spelling: emit null plus an explicit marker.
inline void put_db(nlohmann::json& j, const char* key, double v) {
    if (std::isinf(v)) {
        j[key] = nullptr;
        j[std::string(key) + "_infinite"] = true;
    } else {
        j[key] = v;
    }
}

inline double get_db(const nlohmann::json& j, const char* key) {
    if (j.value(std::string(key) + "_infinite", false)) return std::numeric_limits<double>::infinity();
    return j.at(key).get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        nlohmann::json j{{"name", row.name}, {"ssim", row.ssim}, {"pve_t_sc_mm", row.pve_t_sc_mm}};
        detail::put_db(j, "psnr", row.psnr);
        j["lpips"] = row.lpips ? nlohmann::json(*row.lpips) : nlohmann::json(nullptr);
        rows.push_back(std::move(j));
    }
    nlohmann::json mean{{"ssim", r.mean.ssim}, {"pve_t_sc_mm", r.mean.pve_t_sc_mm}};
    detail::put_db(mean, "psnr", r.mean.psnr);
    mean["lpips"] = r.mean.lpips ? nlohmann::json(*r.mean.lpips) : nlohmann::json(nullptr);
    return {{"format", "reshape-eval-report"},
            {"version", 1},
            {"count", r.rows.size()},
            {"psnr_infinite_count", r.psnr_infinite},
            {"lpips_count", r.lpips_count},
            {"scale_correction", r.scale == ScaleCorrection::height ? "height" : "least_squares"},
            {"rows", rows},
            {"mean", mean}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "reshape-eval-report") throw FormatError("not an evaluation report");
        EvalReport r;
        if (j.value("scale_correction", std::string("least_squares")) == "height") r.scale = ScaleCorrection::height;
        for (const auto& row : j.at("rows")) {
            EvalRow e{row.at("name").get<std::string>(), row.at("ssim").get<double>(), detail::get_db(row, "psnr"),
                      row.at("pve_t_sc_mm").get<double>(), std::nullopt};
            if (!row.at("lpips").is_null()) {
                e.lpips = row.at("lpips").get<double>();
                ++r.lpips_count;
            }
            if (std::isinf(e.psnr)) ++r.psnr_infinite;
            r.rows.push_back(std::move(e));
        }
        r.mean.ssim = j.at("mean").at("ssim").get<double>();
        r.mean.psnr = detail::get_db(j.at("mean"), "psnr");
        r.mean.pve_t_sc_mm = j.at("mean").at("pve_t_sc_mm").get<double>();
        if (!j.at("mean").at("lpips").is_null()) r.mean.lpips = j.at("mean").at("lpips").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed evaluation report: ") + e.what());
    }
}

namespace detail {

// Right-aligns by code points so the arrow glyphs in the header line up.
inline std::string pad_left(const std::string& s, std::size_t width) {
    const auto glyphs = static_cast<std::size_t>(
        std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
    return std::string(width > glyphs ? width - glyphs : 0, ' ') + s;
}

}  // namespace detail

/// Aligned-column table: one row per pair, then the mean.
inline std::string to_text(const EvalReport& r) {
    std::size_t name_w = 4;
    for (const auto& row : r.rows) name_w = std::max(name_w, row.name.size());
    std::ostringstream out;
    auto line = [&](const std::string& name, double ssim_v, double psnr_v, std::optional<double> lp, double pve) {
        out << std::left << std::setw(static_cast<int>(name_w)) << name << std::right << std::fixed
            << std::setw(9) << std::setprecision(4) << ssim_v;
        if (std::isinf(psnr_v)) {
            out << std::setw(9) << "inf";
        } else {
            out << std::setw(9) << std::setprecision(2) << psnr_v;
        }
        if (lp) {
            out << std::setw(9) << std::setprecision(4) << *lp;
        } else {
            out << std::setw(9) << "-";
        }
        out << std::setw(12) << std::setprecision(2) << pve << '\n';
    };
    out << std::left << std::setw(static_cast<int>(name_w)) << "pair" << detail::pad_left("SSIM↑", 9)
        << detail::pad_left("PSNR↑", 9) << detail::pad_left("LPIPS↓", 9) << detail::pad_left("PVE-T-SC↓", 12) << '\n';
    for (const auto& row : r.rows) line(row.name, row.ssim, row.psnr, row.lpips, row.pve_t_sc_mm);
    line("mean", r.mean.ssim, r.mean.psnr, r.mean.lpips, r.mean.pve_t_sc_mm);
    return out.str();
}

}  // namespace reshape::eval
