#include "hrcm/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hrcm/errors.hpp"

namespace hrcm::metrics {

namespace {

// %.17g keeps doubles round-trippable and the output byte-stable.
std::string fmt(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

double num(const std::string& s) {
    if (s == "nan") {
        return std::numeric_limits<double>::quiet_NaN();
    }
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) {
        throw ConfigurationError("bad number '" + s + "' in metrics CSV");
    }
    return v;
}

nlohmann::json finite_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

} // namespace

const std::string& csv_header() {
    static const std::string header =
        "step,time_s,rcm_error_mm,e_t0,e_t1,e_t2,e_t3,mpd_px,inliers,tip_x_mm,tip_y_mm,tip_z_mm,tip_error_mm,"
        "target_vertex,event";
    return header;
}

void write_csv(std::ostream& out, const std::vector<MetricsRecord>& records) {
    out << csv_header() << '\n';
    for (const auto& r : records) {
        out << r.step << ',' << fmt(r.time_s) << ',' << fmt(r.rcm_error_mm);
        for (int k = 0; k < 4; ++k) {
            out << ',' << fmt(r.task_error[k]);
        }
        out << ',' << fmt(r.mpd_px) << ',' << r.inliers;
        for (int k = 0; k < 3; ++k) {
            out << ',' << fmt(r.tip_mm[k]);
        }
        out << ',' << fmt(r.tip_error_mm) << ',' << r.target_vertex << ',' << r.event << '\n';
    }
}

void write_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigurationError("cannot write metrics to " + path.string());
    }
    write_csv(out, records);
}

std::vector<MetricsRecord> read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != csv_header()) {
        throw ConfigurationError("metrics CSV header does not match the expected columns");
    }
    std::vector<MetricsRecord> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        const auto c = split(line);
        if (c.size() != 15) {
            throw ConfigurationError("metrics CSV line " + std::to_string(lineno) + " has " +
                                     std::to_string(c.size()) + " columns");
        }
        try {
            MetricsRecord r;
            r.step = std::stoi(c[0]);
            r.time_s = num(c[1]);
            r.rcm_error_mm = num(c[2]);
            for (int k = 0; k < 4; ++k) {
                r.task_error[k] = num(c[static_cast<std::size_t>(3 + k)]);
            }
            r.mpd_px = num(c[7]);
            r.inliers = std::stoi(c[8]);
            for (int k = 0; k < 3; ++k) {
                r.tip_mm[k] = num(c[static_cast<std::size_t>(9 + k)]);
            }
            r.tip_error_mm = num(c[12]);
            r.target_vertex = std::stoi(c[13]);
            r.event = c[14];
            out.push_back(std::move(r));
        } catch (const std::logic_error& e) {
            throw ConfigurationError("metrics CSV line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::vector<MetricsRecord> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigurationError("cannot open metrics file " + path.string());
    }
    return read_csv(in);
}

Summary summarize(const std::vector<MetricsRecord>& records, double wall_time_s) {
    Summary s;
    s.wall_time_s = wall_time_s;
    s.steps = static_cast<int>(records.size());
    if (records.empty()) {
        s.final_mpd_px = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    double sum = 0.0;
    s.min_inliers = records.front().inliers;
    s.final_mpd_px = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : records) {
        s.max_rcm_error_mm = std::max(s.max_rcm_error_mm, r.rcm_error_mm);
        sum += r.rcm_error_mm;
        s.min_inliers = std::min(s.min_inliers, r.inliers);
        if (std::isfinite(r.mpd_px)) {
            s.final_mpd_px = r.mpd_px;
        }
        if (r.event == "advance" || r.event == "converged") {
            s.advances.emplace_back(r.step, r.target_vertex);
        }
    }
    s.mean_rcm_error_mm = sum / static_cast<double>(records.size());
    s.final_tip_error_mm = records.back().tip_error_mm;
    s.converged = records.back().event == "converged";
    return s;
}

nlohmann::json summary_to_json(const Summary& s) {
    nlohmann::json adv = nlohmann::json::array();
    for (const auto& [step, v] : s.advances) {
        adv.push_back({{"step", step}, {"vertex", v}});
    }
    return {{"converged", s.converged},
            {"final_mpd_px", finite_or_null(s.final_mpd_px)},
            {"max_rcm_error_mm", s.max_rcm_error_mm},
            {"mean_rcm_error_mm", s.mean_rcm_error_mm},
            {"final_tip_error_mm", finite_or_null(s.final_tip_error_mm)},
            {"steps", s.steps},
            {"min_inliers", s.min_inliers},
            {"wall_time_s", s.wall_time_s},
            {"vertex_events", adv}};
}

nlohmann::json plot_series(const std::vector<MetricsRecord>& records) {
    nlohmann::json step = nlohmann::json::array(), t = nlohmann::json::array(), rcm = nlohmann::json::array(), mpd = nlohmann::json::array(),
                   e = nlohmann::json::array(), inl = nlohmann::json::array(), tip = nlohmann::json::array(),
                   tgt = nlohmann::json::array();
    for (const auto& r : records) {
        step.push_back(r.step);
        t.push_back(r.time_s);
        rcm.push_back(r.rcm_error_mm);
        mpd.push_back(finite_or_null(r.mpd_px));
        e.push_back({r.task_error[0], r.task_error[1], r.task_error[2], r.task_error[3]});
        inl.push_back(r.inliers);
        tip.push_back(finite_or_null(r.tip_error_mm));
        tgt.push_back(r.target_vertex);
    }
    return {{"step", step},         {"time_s", t},       {"rcm_error_mm", rcm},       {"mpd_px", mpd},
            {"task_error", e},      {"inliers", inl},    {"tip_error_mm", tip},       {"target_vertex", tgt}};
}

nlohmann::json record_to_json(const MetricsRecord& r) {
    return {{"step", r.step},
            {"time_s", r.time_s},
            {"rcm_error_mm", r.rcm_error_mm},
            {"task_error", {r.task_error[0], r.task_error[1], r.task_error[2], r.task_error[3]}},
            {"mpd_px", finite_or_null(r.mpd_px)},
            {"inliers", r.inliers},
            {"target_vertex", r.target_vertex},
            {"event", r.event},
            {"eval", {{"tip_mm", {r.tip_mm[0], r.tip_mm[1], r.tip_mm[2]}},
                      {"tip_error_mm", finite_or_null(r.tip_error_mm)}}}};
}

} // namespace hrcm::metrics
