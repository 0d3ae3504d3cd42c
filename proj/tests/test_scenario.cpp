#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include "hrcm/errors.hpp"
#include "hrcm/scenario.hpp"

using namespace hrcm;
using namespace hrcm::scenario;
using nlohmann::json;

namespace {

const std::filesystem::path kConfigs = HRCM_CONFIG_DIR;

} // namespace

TEST(ScenarioConfig, BuiltInDefaultsValidate) {
    for (const auto kind : {ScenarioKind::AnyToAny, ScenarioKind::ToolMotion, ScenarioKind::Reposition}) {
        const auto c = ScenarioConfig::defaults(kind);
        EXPECT_NO_THROW(c.validate());
        EXPECT_EQ(c.kind, kind);
        EXPECT_EQ(parse_kind(to_string(kind)), kind);
    }
    EXPECT_THROW(parse_kind("teleport"), ConfigurationError);
}

TEST(ScenarioConfig, JsonRoundTrip) {
    for (const auto kind : {ScenarioKind::AnyToAny, ScenarioKind::ToolMotion, ScenarioKind::Reposition}) {
        auto c = ScenarioConfig::defaults(kind);
        c.seed = 99;
        c.reposition.pivot = Eigen::Vector3d(0.5, 0.1, 0.2);
        const json j = scenario_to_json(c);
        EXPECT_EQ(scenario_to_json(scenario_from_json(j)), j);
    }
}

TEST(ScenarioConfig, PartialDocumentsKeepKindDefaults) {
    const auto c = scenario_from_json({{"kind", "tool_motion"}, {"seed", 7}, {"servo", {{"max_steps", 50}}}});
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.servo.max_steps, 50);
    EXPECT_EQ(c.servo.final_mpd_px, 1.5);
    EXPECT_EQ(c.tool_motion.outlier_rate, 0.3);
    EXPECT_EQ(c.script.size(), ScenarioConfig::defaults(ScenarioKind::ToolMotion).script.size());
}

TEST(ScenarioConfig, InvalidValuesAreRejected) {
    EXPECT_THROW(scenario_from_json({{"controller", {{"task_sign", 0.5}}}}), ConfigurationError);
    EXPECT_THROW(scenario_from_json({{"controller", {{"mode", "c"}}}}), ConfigurationError);
    EXPECT_THROW(scenario_from_json({{"controller", {{"kp", {1, 2, 3}}}}}), ConfigurationError);
    EXPECT_THROW(scenario_from_json({{"servo", {{"final_mpd_px", -1.0}}}}), ConfigurationError);
    EXPECT_THROW(scenario_from_json({{"corruption", {{"outlier_rate", 2.0}}}}), ConfigurationError);
    EXPECT_THROW(scenario_from_json({{"script", json::array()}}), ConfigurationError);
    EXPECT_THROW(scenario_from_json({{"servo_target", 9}}), ConfigurationError);
    EXPECT_THROW(scenario_from_json({{"script", {{{"wiggle", true}}}}}), ConfigurationError);
}

TEST(ScenarioConfig, ShippedConfigsLoad) {
    int count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(kConfigs)) {
        if (entry.path().extension() != ".json" || entry.path().stem() == "default_chain") {
            continue;
        }
        ++count;
        const auto c = load_scenario(entry.path());
        EXPECT_NO_THROW(c.validate()) << entry.path();
        EXPECT_EQ(c.chain().dof(), 7) << entry.path();
        EXPECT_TRUE(c.output_dir.is_absolute()) << entry.path();
    }
    EXPECT_GE(count, 5);
    EXPECT_THROW(load_scenario(kConfigs / "missing.json"), ConfigurationError);
}

TEST(ScenarioConfig, ShippedChainMatchesTheBuiltIn) {
    const auto file = kinematics::load_chain(kConfigs / "default_chain.json");
    EXPECT_EQ(kinematics::chain_to_json(file), kinematics::chain_to_json(kinematics::ChainModel::default_chain()));
}

TEST(ScenarioConfig, MalformedFileIsAConfigurationError) {
    const auto path = std::filesystem::temp_directory_path() / "hrcm_bad_scenario.json";
    std::ofstream(path) << "{ not json";
    EXPECT_THROW(load_scenario(path), ConfigurationError);
    std::filesystem::remove(path);
}

TEST(RepositionConfig, RotationAboutThePivot) {
    RepositionConfig r;
    r.axis = Eigen::Vector3d::UnitZ();
    r.angle_deg = 90.0;
    const Eigen::Vector3d trocar(1.0, 0.0, 0.5);
    const auto T = r.transform(trocar);
    EXPECT_LE((T.transform(trocar) - trocar).norm(), 1e-12);
    EXPECT_LE((T.transform(Eigen::Vector3d(2.0, 0.0, 0.0)) - Eigen::Vector3d(1.0, 1.0, 0.0)).norm(), 1e-12);
    r.pivot = Eigen::Vector3d::Zero();
    EXPECT_LE((r.transform(trocar).transform(Eigen::Vector3d(2.0, 0.0, 0.0)) - Eigen::Vector3d(0.0, 2.0, 0.0)).norm(),
              1e-12);
}

TEST(InitialView, ScopeAxisPassesThroughTheTrocar) {
    InitialView v;
    v.tilt_deg = 15.0;
    v.azimuth_deg = 60.0;
    const Eigen::Vector3d trocar(0.5, 0.1, 0.3);
    const auto pose = v.camera_pose(trocar);
    const Eigen::Vector3d z = pose.z_axis();
    EXPECT_NEAR(std::acos(-z.z()) * 180.0 / M_PI, 15.0, 1e-9);
    EXPECT_LE((pose.translation - v.insertion_m * z - trocar).norm(), 1e-12);
    EXPECT_TRUE(pose.is_orthonormal());
}

TEST(ToolMotionConfig, BurstWindows) {
    ToolMotionConfig t;
    t.start_step = 5;
    t.period_steps = 45;
    t.burst_steps = 20;
    EXPECT_FALSE(t.in_burst(4));
    EXPECT_TRUE(t.in_burst(5));
    EXPECT_TRUE(t.in_burst(24));
    EXPECT_FALSE(t.in_burst(25));
    EXPECT_TRUE(t.in_burst(50));
}
