#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "hrcm/errors.hpp"
#include "hrcm/simulator.hpp"
#include "support.hpp"

using namespace hrcm;
using namespace hrcm::sim;
using scenario::ScenarioConfig;
using scenario::ScenarioKind;

namespace {

Twist twist(double vx, double vy, double vz, double wx, double wy, double wz) {
    Twist t;
    t << vx, vy, vz, wx, wy, wz;
    return t;
}

ScenarioConfig perturbed_config(const Twist& jog, int steps) {
    auto c = ScenarioConfig::defaults(ScenarioKind::AnyToAny);
    c.script = {scenario::CaptureStep{}, scenario::JogStep{jog, steps}};
    c.servo_target = 0;
    return c;
}

Eigen::Vector3d log_rotation(const Eigen::Matrix3d& R) { return test_support::log_so3(R); }

} // namespace

TEST(IntegrateStep, ZeroVelocityOnlyAdvancesTime) {
    auto w = World::from_config(ScenarioConfig::defaults(ScenarioKind::AnyToAny));
    const Eigen::VectorXd q0 = w.q;
    EXPECT_FALSE(integrate_step(w, Eigen::VectorXd::Zero(w.q.size()), 0.02));
    EXPECT_EQ(w.q, q0);
    EXPECT_DOUBLE_EQ(w.time_s, 0.02);
}

TEST(IntegrateStep, ConstantVelocityIsLinear) {
    auto w = World::from_config(ScenarioConfig::defaults(ScenarioKind::AnyToAny));
    const Eigen::VectorXd q0 = w.q;
    Eigen::VectorXd qd(7);
    qd << 0.01, -0.02, 0.015, 0.0, 0.03, -0.01, 0.02;
    const double dt = 1.0 / 300.0;
    for (int k = 0; k < 50; ++k) {
        integrate_step(w, qd, dt);
    }
    EXPECT_LE((w.q - (q0 + 50 * dt * qd)).cwiseAbs().maxCoeff(), 1e-12);
    const auto f = w.frames();
    EXPECT_NEAR(w.rcm.lambda, rcm::lambda_projection(f.pose_i.translation, f.pose_ip1.translation, w.trocar), 1e-15);
}

TEST(IntegrateStep, RejectsBadInputAndClampsLimits) {
    auto w = World::from_config(ScenarioConfig::defaults(ScenarioKind::AnyToAny));
    Eigen::VectorXd qd = Eigen::VectorXd::Zero(7);
    qd[2] = std::nan("");
    EXPECT_THROW(integrate_step(w, qd, 0.01), NumericError);
    EXPECT_THROW(integrate_step(w, Eigen::VectorXd::Zero(6), 0.01), ConfigurationError);
    EXPECT_THROW(integrate_step(w, Eigen::VectorXd::Zero(7), 0.0), ConfigurationError);
    qd.setZero();
    qd[0] = 100.0;
    EXPECT_TRUE(integrate_step(w, qd, 1.0));
    EXPECT_TRUE(w.chain.within_limits(w.q));
    EXPECT_EQ(w.limit_warnings, 1);
}

TEST(IntegrateStep, EulerErrorHalvesWithTheStep) {
    const auto base = ScenarioConfig::defaults(ScenarioKind::AnyToAny);
    const Twist cmd = twist(0, 0, 0.02, 0.3, -0.2, 0.4);
    auto run = [&](int substeps) {
        auto w = World::from_config(base);
        auto c = base.controller;
        c.control_substeps = substeps;
        for (int k = 0; k < 3; ++k) {
            manual_jog(w, cmd, c);
        }
        return Eigen::VectorXd(w.q);
    };
    const Eigen::VectorXd ref = run(1280);
    const double e1 = (run(20) - ref).norm();
    const double e2 = (run(40) - ref).norm();
    EXPECT_GT(e1 / e2, 1.6);
    EXPECT_LT(e1 / e2, 2.4);
}

TEST(ManualJog, ZeroTwistKeepsTheRobotStill) {
    auto w = World::from_config(ScenarioConfig::defaults(ScenarioKind::AnyToAny));
    ASSERT_LE(w.rcm_error(), 1e-9);
    const Eigen::VectorXd q0 = w.q;
    for (int k = 0; k < 10; ++k) {
        manual_jog(w, Twist::Zero(), ScenarioConfig{}.controller);
    }
    EXPECT_LE((w.q - q0).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ManualJog, OpticalAxisRotationKeepsTheTrocar) {
    const auto config = ScenarioConfig::defaults(ScenarioKind::AnyToAny);
    auto w = World::from_config(config);
    const Pose start = w.camera_pose();
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        manual_jog(w, twist(0, 0, 0, 0, 0, 0.2), config.controller);
        worst = std::max(worst, w.rcm_error());
    }
    EXPECT_LE(worst, 1e-4);
    const Eigen::Vector3d rel = log_rotation(start.rotation.transpose() * w.camera_pose().rotation);
    EXPECT_GT(rel.z(), 0.3);
    EXPECT_LE(rel.head<2>().norm(), 0.1 * rel.z());
    EXPECT_LE((w.camera_pose().translation - start.translation).norm(), 2e-3);
    EXPECT_THROW(manual_jog(w, twist(0, 0, 0, 0, 0, std::nan("")), config.controller), NumericError);
}

TEST(ManualJog, LateralTranslationIsProjectedOntoTheRcm) {
    auto config = ScenarioConfig::defaults(ScenarioKind::AnyToAny);
    config.controller.mode = homography::ProjectionMode::A;
    auto w = World::from_config(config);
    const Pose start = w.camera_pose();
    double worst = 0.0;
    for (int k = 0; k < 60; ++k) {
        manual_jog(w, twist(0.01, 0, 0, 0, 0, 0), config.controller);
        worst = std::max(worst, w.rcm_error());
    }
    EXPECT_LE(worst, 1e-3);
    const Eigen::Vector3d moved = start.rotation.transpose() * (w.camera_pose().translation - start.translation);
    EXPECT_GT(moved.x(), 5e-3);
    // With the trocar fixed, a lateral tip shift must tilt the scope.
    EXPECT_GT(log_rotation(start.rotation.transpose() * w.camera_pose().rotation).norm(), 0.05);
}

TEST(Servo, StartingAtTheTargetConvergesImmediately) {
    auto c = ScenarioConfig::defaults(ScenarioKind::AnyToAny);
    c.script = {scenario::CaptureStep{}};
    c.servo_target = 0;
    const auto r = run_scenario(c);
    ASSERT_EQ(r.servo.records.size(), 1u);
    EXPECT_TRUE(r.servo.converged());
    EXPECT_LE(r.summary.final_mpd_px, 1.5);
    EXPECT_EQ(r.servo.path, std::vector<int>{0});
}

TEST(Servo, SmallRotationConvergesMonotonically) {
    const auto r = run_scenario(perturbed_config(twist(0, 0, 0.01, 0.12, -0.08, 0.15), 30));
    ASSERT_TRUE(r.servo.converged());
    EXPECT_LE(r.summary.final_mpd_px, 1.5);
    EXPECT_LE(r.summary.max_rcm_error_mm, 1.0);
    const auto& rec = r.servo.records;
    ASSERT_GT(rec.size(), 30u);
    for (std::size_t k = 0; k + 20 < rec.size(); ++k) {
        EXPECT_LT(rec[k + 20].task_error.norm(), rec[k].task_error.norm()) << "window at step " << rec[k].step;
    }
}

TEST(Servo, AnyToAnyVisitsThePathInOrder) {
    const auto r = run_scenario(ScenarioConfig::defaults(ScenarioKind::AnyToAny));
    EXPECT_EQ(r.servo.path, (std::vector<int>{3, 2, 1}));
    ASSERT_TRUE(r.servo.converged());
    std::vector<std::pair<std::string, int>> events;
    for (const auto& rec : r.servo.records) {
        if (rec.event == "advance" || rec.event == "converged") {
            events.emplace_back(rec.event, rec.target_vertex);
            EXPECT_LE(rec.mpd_px, rec.event == "advance" ? 5.0 : 1.5);
        }
    }
    const std::vector<std::pair<std::string, int>> expect{{"advance", 3}, {"advance", 2}, {"converged", 1}};
    EXPECT_EQ(events, expect);
    EXPECT_EQ(r.graph.current(), 1);
    EXPECT_LE(r.summary.final_tip_error_mm, 0.5);
}

TEST(Servo, IdentityRepositionIsServoInPlace) {
    auto c = ScenarioConfig::defaults(ScenarioKind::Reposition);
    c.reposition.angle_deg = 0.0;
    const auto r = run_scenario(c);
    ASSERT_TRUE(r.servo.converged());
    EXPECT_EQ(r.servo.records.size(), 1u);
    EXPECT_LE(r.summary.final_mpd_px, 1.5);
}

TEST(Servo, ToolMotionBurstsDipTheInlierCount) {
    const auto c = ScenarioConfig::defaults(ScenarioKind::ToolMotion);
    const auto r = run_scenario(c);
    ASSERT_TRUE(r.servo.converged());
    int burst_min = 1 << 30, calm_min = 1 << 30;
    for (const auto& rec : r.servo.records) {
        if (!std::isfinite(rec.mpd_px)) {
            continue;
        }
        int& slot = c.tool_motion.in_burst(rec.step) ? burst_min : calm_min;
        slot = std::min(slot, rec.inliers);
    }
    ASSERT_LT(burst_min, 1 << 30);
    EXPECT_LT(burst_min, calm_min);
}

TEST(Servo, PersistentEstimationFailureStopsTheRun) {
    auto c = ScenarioConfig::defaults(ScenarioKind::AnyToAny);
    c.corruption.dropout_rate = 1.0;
    auto [world, graph] = build_graph(ScenarioConfig::defaults(ScenarioKind::AnyToAny));
    const auto r = run_servo(world, graph, c.servo_target, ServoOptions::from_config(c));
    EXPECT_EQ(r.status, ServoStatus::Failed);
    ASSERT_EQ(r.records.size(), 30u);
    for (std::size_t i = 0; i + 1 < r.records.size(); ++i) {
        EXPECT_EQ(r.records[i].event, "estimation_failure");
        EXPECT_TRUE(std::isnan(r.records[i].mpd_px));
    }
    EXPECT_EQ(r.records.back().event, "failed");
}

TEST(Servo, StepBudgetAbortsTheRun) {
    auto c = ScenarioConfig::defaults(ScenarioKind::AnyToAny);
    c.servo.max_steps = 4;
    const auto r = run_scenario(c);
    EXPECT_EQ(r.servo.status, ServoStatus::Aborted);
    ASSERT_EQ(r.servo.records.size(), 4u);
    EXPECT_EQ(r.servo.records.back().event, "aborted");
}

TEST(Servo, FinishedRunRejectsFurtherSteps) {
    auto [world, graph] = build_graph(ScenarioConfig::defaults(ScenarioKind::AnyToAny));
    ServoRun run(world, graph, 1, ServoOptions::from_config(ScenarioConfig::defaults(ScenarioKind::AnyToAny)));
    run.step();
    run.abort();
    EXPECT_EQ(run.status(), ServoStatus::Aborted);
    EXPECT_THROW(run.step(), ConfigurationError);
    EXPECT_THROW(ServoRun(world, graph, 9, ServoOptions{}), ConfigurationError);
}

TEST(Servo, StepSeedsAreDistinctAndStable) {
    EXPECT_EQ(step_seed(1, 5), step_seed(1, 5));
    EXPECT_NE(step_seed(1, 5), step_seed(1, 6));
    EXPECT_NE(step_seed(1, 5), step_seed(2, 5));
}

TEST(Scenario, IdenticalSeedsGiveIdenticalLogs) {
    auto c = ScenarioConfig::defaults(ScenarioKind::ToolMotion);
    auto csv = [](const ScenarioResult& r) {
        std::ostringstream s;
        metrics::write_csv(s, r.servo.records);
        return s.str();
    };
    const std::string a = csv(run_scenario(c));
    EXPECT_EQ(a, csv(run_scenario(c)));
    c.seed = 2;
    EXPECT_NE(a, csv(run_scenario(c)));
}

TEST(Scenario, ArtifactsAreWritten) {
    const auto dir = std::filesystem::temp_directory_path() / "hrcm_artifacts_test";
    std::filesystem::remove_all(dir);
    const auto r = run_scenario(ScenarioConfig::defaults(ScenarioKind::AnyToAny));
    write_artifacts(r, dir);
    const auto back = metrics::read_csv(dir / "metrics.csv");
    ASSERT_EQ(back.size(), r.servo.records.size());
    EXPECT_EQ(back.back().event, "converged");
    std::ifstream in(dir / "summary.json");
    const auto summary = nlohmann::json::parse(in);
    EXPECT_EQ(summary["status"], "converged");
    EXPECT_EQ(summary["path"], nlohmann::json::array({3, 2, 1}));
    EXPECT_EQ(graph::ViewGraph::load(dir / "graph.json").size(), 4u);
    std::filesystem::remove_all(dir);
}
