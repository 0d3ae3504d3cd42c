#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "hrcm/errors.hpp"
#include "hrcm/metrics.hpp"

using namespace hrcm::metrics;

namespace {

std::vector<MetricsRecord> sample_log() {
    std::vector<MetricsRecord> log;
    for (int k = 1; k <= 4; ++k) {
        MetricsRecord r;
        r.step = k;
        r.time_s = k / 30.0;
        r.rcm_error_mm = 0.1 * k;
        r.task_error = Eigen::Vector4d(0.1, -0.2, 0.3, 0.4) / k;
        r.mpd_px = 10.0 / k;
        r.inliers = 100 - k;
        r.tip_mm = Eigen::Vector3d(550.0 + k, 1.0 / 3.0, 200.0);
        r.tip_error_mm = 1.0 / k;
        r.target_vertex = k < 3 ? 2 : 1;
        log.push_back(r);
    }
    log[1].event = "advance";
    log[2].event = "estimation_failure";
    log[2].mpd_px = std::numeric_limits<double>::quiet_NaN();
    log[3].event = "converged";
    return log;
}

} // namespace

TEST(MetricsCsv, RoundTripIsExact) {
    const auto log = sample_log();
    std::stringstream s;
    write_csv(s, log);
    const std::string text = s.str();
    EXPECT_EQ(text.substr(0, text.find('\n')), csv_header());
    const auto back = read_csv(s);
    ASSERT_EQ(back.size(), log.size());
    for (std::size_t i = 0; i < log.size(); ++i) {
        EXPECT_EQ(back[i].step, log[i].step);
        EXPECT_EQ(back[i].time_s, log[i].time_s);
        EXPECT_EQ(back[i].task_error, log[i].task_error);
        EXPECT_EQ(back[i].tip_mm, log[i].tip_mm);
        EXPECT_EQ(back[i].event, log[i].event);
        EXPECT_EQ(std::isnan(back[i].mpd_px), std::isnan(log[i].mpd_px));
    }
    std::stringstream again;
    write_csv(again, back);
    EXPECT_EQ(again.str(), text);
}

TEST(MetricsCsv, RejectsAForeignHeader) {
    std::stringstream s("a,b,c\n1,2,3\n");
    EXPECT_THROW(read_csv(s), hrcm::ConfigurationError);
}

TEST(Summary, AggregatesTheLog) {
    const auto s = summarize(sample_log(), 1.5);
    EXPECT_TRUE(s.converged);
    EXPECT_EQ(s.steps, 4);
    EXPECT_DOUBLE_EQ(s.final_mpd_px, 2.5);
    EXPECT_DOUBLE_EQ(s.max_rcm_error_mm, 0.4);
    EXPECT_DOUBLE_EQ(s.mean_rcm_error_mm, 0.25);
    EXPECT_DOUBLE_EQ(s.final_tip_error_mm, 0.25);
    EXPECT_EQ(s.min_inliers, 96);
    EXPECT_EQ(s.advances, (std::vector<std::pair<int, int>>{{2, 2}, {4, 1}}));
    const auto j = summary_to_json(s);
    EXPECT_EQ(j["vertex_events"].size(), 2u);
    EXPECT_EQ(j["vertex_events"][1]["vertex"], 1);
    EXPECT_EQ(j["wall_time_s"], 1.5);
}

TEST(Summary, EmptyLog) {
    const auto s = summarize({});
    EXPECT_FALSE(s.converged);
    EXPECT_EQ(s.steps, 0);
    EXPECT_TRUE(summary_to_json(s)["final_mpd_px"].is_null());
}

TEST(PlotSeries, ColumnsHaveOneEntryPerRecord) {
    const auto j = plot_series(sample_log());
    EXPECT_EQ(j["step"].size(), 4u);
    EXPECT_EQ(j["mpd_px"].size(), 4u);
    EXPECT_TRUE(j["mpd_px"][2].is_null());
    EXPECT_EQ(record_to_json(sample_log()[3])["event"], "converged");
}
