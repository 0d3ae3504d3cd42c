#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

namespace hrcm::metrics {

/// One row per servo frame. Tip position and tip error are evaluation-only.
struct MetricsRecord {
    int step = 0;
    double time_s = 0.0;
    double rcm_error_mm = 0.0;
    Eigen::Vector4d task_error = Eigen::Vector4d::Zero();  // smoothed, projected
    double mpd_px = 0.0;                                   // NaN when estimation failed
    int inliers = 0;
    Eigen::Vector3d tip_mm = Eigen::Vector3d::Zero();
    double tip_error_mm = 0.0;  // distance to the active vertex's capture-time tip
    int target_vertex = -1;
    std::string event;  // "", "advance", "converged", "estimation_failure", "aborted", "failed"
};

/// Column header of the CSV format, without trailing newline.
const std::string& csv_header();

void write_csv(std::ostream& out, const std::vector<MetricsRecord>& records);
void write_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_csv(std::istream& in);
std::vector<MetricsRecord> read_csv(const std::filesystem::path& path);

struct Summary {
    bool converged = false;
    double final_mpd_px = 0.0;
    double max_rcm_error_mm = 0.0;
    double mean_rcm_error_mm = 0.0;
    double final_tip_error_mm = 0.0;
    int steps = 0;
    int min_inliers = 0;
    double wall_time_s = 0.0;
    std::vector<std::pair<int, int>> advances;  // (step, vertex) for every advance/converged event
};

Summary summarize(const std::vector<MetricsRecord>& records, double wall_time_s = 0.0);
nlohmann::json summary_to_json(const Summary& s);

/// Column-wise series of a log, convenient for plotting.
nlohmann::json plot_series(const std::vector<MetricsRecord>& records);

nlohmann::json record_to_json(const MetricsRecord& r);

} // namespace hrcm::metrics
