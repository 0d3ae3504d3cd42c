#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "hrcm/errors.hpp"
#include "hrcm/vision.hpp"
#include "support.hpp"

using namespace hrcm;
using namespace hrcm::vision;

namespace {

CameraIntrinsics k500() { return {500.0, 500.0, 320.0, 240.0, {}}; }

Pose looking_down(const Eigen::Vector3d& position) {
    Pose p;
    p.rotation = Eigen::Vector3d(1, -1, -1).asDiagonal();  // optical axis along -z
    p.translation = position;
    return p;
}

PlanarScene ground_plane(int count, std::uint64_t seed) {
    return PlanarScene::generate(Pose{}, count, 0.1, seed);
}

std::vector<Correspondence> synthesize(const Eigen::Matrix3d& G, int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 640.0);
    std::vector<Correspondence> out;
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d t(u(rng), u(rng));
        out.push_back({t, apply_homography(G, t)});
    }
    return out;
}

double max_reprojection(const Eigen::Matrix3d& G, std::span<const Correspondence> m) {
    double worst = 0.0;
    for (const auto& c : m) {
        worst = std::max(worst, transfer_error(G, c));
    }
    return worst;
}

Eigen::Matrix3d sample_g() {
    Eigen::Matrix3d G;
    G << 0.97, -0.08, 15.0, 0.06, 1.02, -9.0, 2e-5, -3e-5, 1.0;
    return G;
}

} // namespace

TEST(ProjectScene, OpticalAxisHitsPrincipalPoint) {
    PlanarScene scene;
    scene.features = {{0, Eigen::Vector2d::Zero()}};
    for (const double h : {0.05, 0.3, 2.0}) {
        const auto obs = project_scene(scene, looking_down({0, 0, h}), k500());
        ASSERT_EQ(obs.size(), 1u);
        EXPECT_TRUE(obs[0].inside_fov);
        EXPECT_NEAR(obs[0].pixel.x(), 320.0, 1e-12);
        EXPECT_NEAR(obs[0].pixel.y(), 240.0, 1e-12);
    }
}

TEST(ProjectScene, PinholeExample) {
    PlanarScene scene;
    scene.features = {{7, Eigen::Vector2d(0.1, 0.0)}};
    // Camera at the origin looking along world +z at a plane one meter away.
    scene.plane_pose.translation = Eigen::Vector3d(0, 0, 1);
    const auto obs = project_scene(scene, Pose{}, k500());
    EXPECT_NEAR(obs[0].pixel.x(), 370.0, 1e-12);
    EXPECT_EQ(obs[0].id, 7);
}

TEST(ProjectScene, BehindCameraIsFlaggedAndAllBehindThrows) {
    PlanarScene scene;
    scene.features = {{0, Eigen::Vector2d::Zero()}, {1, Eigen::Vector2d(0.5, 0.0)}};
    Pose cam = looking_down({0, 0, 0.1});
    cam.rotation = Eigen::AngleAxisd(1.0, Eigen::Vector3d::UnitY()) * cam.rotation;
    const auto obs = project_scene(scene, cam, k500());
    EXPECT_TRUE(obs[0].inside_fov);
    EXPECT_FALSE(obs[1].inside_fov);
    EXPECT_TRUE(std::isnan(obs[1].pixel.x()));
    EXPECT_THROW(project_scene(scene, looking_down({0, 0, -0.2}), k500()), DegenerateGeometryError);
}

TEST(ProjectScene, CircularMask) {
    PlanarScene scene;
    scene.features = {{0, Eigen::Vector2d::Zero()}, {1, Eigen::Vector2d(0.05, 0.0)}};
    FovMask mask;
    mask.center = Eigen::Vector2d(320, 240);
    mask.radius = 100.0;
    const auto obs = project_scene(scene, looking_down({0, 0, 0.1}), k500(), mask);
    EXPECT_TRUE(obs[0].inside_fov);
    EXPECT_FALSE(obs[1].inside_fov);  // 250 px off-centre
    EXPECT_FALSE(std::isnan(obs[1].pixel.x()));
}

TEST(Distortion, ZeroCoefficientsAndOrigin) {
    const Eigen::Vector2d p(0.3, -0.2);
    EXPECT_EQ(distort(p, Distortion{}), p);
    EXPECT_EQ(undistort(p, Distortion{}), p);
    const Distortion d{0.2, -0.1, 0.01, 0.02, 0.05};
    EXPECT_EQ(distort(Eigen::Vector2d::Zero(), {0.2, -0.1, 0.0, 0.0, 0.05}), Eigen::Vector2d::Zero());
    EXPECT_LE(undistort(distort(Eigen::Vector2d::Zero(), d), d).norm(), 1e-10);
}

TEST(Distortion, RoundTrip) {
    const Distortion d{0.1, 0.0, 0.0, 0.0, 0.0};
    const Eigen::Vector2d p(0.2, 0.1);
    EXPECT_LE((undistort(distort(p, d), d) - p).cwiseAbs().maxCoeff(), 1e-8);

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> k(-0.3, 0.3), x(-0.4, 0.4);
    for (int trial = 0; trial < 200; ++trial) {
        const Distortion dd{k(rng), 0.0, 0.0, 0.0, 0.0};
        const Eigen::Vector2d q(x(rng), x(rng));
        EXPECT_LE((undistort(distort(q, dd), dd) - q).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(Distortion, NonConvergenceIsReported) {
    const Distortion wild{5.0, 5.0, 0.0, 0.0, 5.0};
    EXPECT_THROW(undistort(Eigen::Vector2d(1.5, 1.5), wild), NumericError);
}

TEST(Distortion, FullSceneRoundTripInPixels) {
    CameraIntrinsics K = k500();
    K.distortion = {-0.12, 0.03, 1e-3, -5e-4, 0.0};
    CameraIntrinsics K0 = k500();
    const auto scene = ground_plane(200, 3);
    const Pose cam = looking_down({0.01, -0.02, 0.15});
    const auto distorted = project_scene(scene, cam, K);
    const auto clean = project_scene(scene, cam, K0);
    const auto undone = undistort_observations(distorted, K);
    for (std::size_t i = 0; i < clean.size(); ++i) {
        ASSERT_EQ(undone[i].id, clean[i].id);
        EXPECT_LE((undone[i].pixel - clean[i].pixel).norm(), 1e-6);
    }
}

TEST(CropRescale, Examples) {
    const auto K = k500();
    const auto same = crop_rescale_intrinsics(K, Eigen::Vector2d::Zero(), 1.0);
    EXPECT_EQ(same.fx, K.fx);
    EXPECT_EQ(same.cx, K.cx);
    const CameraIntrinsics K2{500.0, 500.0, 100.0, 100.0, {}};
    const auto out = crop_rescale_intrinsics(K2, Eigen::Vector2d(20, 30), 2.0);
    EXPECT_EQ(out.fx, 1000.0);
    EXPECT_EQ(out.fy, 1000.0);
    EXPECT_EQ(out.cx, 160.0);
    EXPECT_EQ(out.cy, 140.0);
    EXPECT_THROW(crop_rescale_intrinsics(K2, Eigen::Vector2d::Zero(), 0.0), ConfigurationError);
}

TEST(CropRescale, ComposesLikeASingleCrop) {
    const auto K = k500();
    const Eigen::Vector2d o1(12, 7), o2(3, 9);
    const double s1 = 1.5, s2 = 0.8;
    const auto twice = crop_rescale_intrinsics(crop_rescale_intrinsics(K, o1, s1), o2, s2);
    const auto once = crop_rescale_intrinsics(K, o1 + o2 / s1, s1 * s2);
    EXPECT_NEAR(twice.fx, once.fx, 1e-12);
    EXPECT_NEAR(twice.cx, once.cx, 1e-12);
    EXPECT_NEAR(twice.cy, once.cy, 1e-12);
}

TEST(EndoscopeCamera, CropIsInscribedInTheCircle) {
    const EndoscopeCamera cam({900, 900, 960, 540, {}}, Eigen::Vector2d(960, 540), 500.0, 1.0, 640.0);
    EXPECT_NEAR(cam.crop_size().x(), 1000.0 / std::sqrt(2.0), 1e-9);
    EXPECT_NEAR(cam.crop_size().norm(), 1000.0, 1e-9);
    EXPECT_NEAR(cam.image_size().x(), 640.0, 1e-9);
    EXPECT_NEAR(cam.intrinsics().cx, 320.0, 1e-9);
    EXPECT_NEAR(cam.intrinsics().fx, 900.0 * cam.scale(), 1e-9);
    const auto mask = cam.output_mask();
    EXPECT_NEAR(mask.radius, 500.0 * cam.scale(), 1e-9);
    EXPECT_FALSE(mask.contains(Eigen::Vector2d(-1.0, 320.0)));
    EXPECT_TRUE(mask.contains(Eigen::Vector2d(320.0, 320.0)));
    EXPECT_THROW(EndoscopeCamera({900, 900, 960, 540, {}}, Eigen::Vector2d(960, 540), -1.0, 1.0, 640.0),
                 ConfigurationError);
}

namespace {

std::vector<FeatureObservation> grid_observations(int n) {
    std::vector<FeatureObservation> obs;
    for (int i = 0; i < n; ++i) {
        obs.push_back({i, Eigen::Vector2d(20.0 + 60.0 * (i % 10) + 0.7 * (i % 3), 20.0 + 50.0 * (i / 10) + 0.4 * (i % 7)), true});
    }
    return obs;
}

} // namespace

TEST(MatchViews, CleanMatchesAreExactIdPairs) {
    auto target = grid_observations(120);
    auto current = grid_observations(120);
    for (auto& o : current) {
        o.pixel += Eigen::Vector2d(4.0, -2.0);
    }
    target[5].inside_fov = false;
    current[9].inside_fov = false;
    current.pop_back();
    const auto m = match_views(current, target, {}, 1);
    EXPECT_EQ(m.size(), 117u);
    for (const auto& p : m.pairs) {
        EXPECT_NE(p.id, 5);
        EXPECT_NE(p.id, 9);
        EXPECT_EQ(p.current - p.target, Eigen::Vector2d(4.0, -2.0));
        EXPECT_FALSE(p.synthetic_outlier);
    }
}

TEST(MatchViews, SeededOutliersAndDropout) {
    const auto obs = grid_observations(100);
    Corruption c;
    c.outlier_rate = 0.3;
    const auto m = match_views(obs, obs, c, 77);
    int flagged = 0;
    for (const auto& p : m.pairs) {
        flagged += p.synthetic_outlier ? 1 : 0;
    }
    EXPECT_EQ(flagged, 30);
    const auto again = match_views(obs, obs, c, 77);
    for (std::size_t i = 0; i < m.size(); ++i) {
        EXPECT_EQ(m.pairs[i].current, again.pairs[i].current);
    }
    c.dropout_rate = 1.0;
    EXPECT_THROW(match_views(obs, obs, c, 77), InsufficientFeaturesError);
    Corruption bad;
    bad.outlier_rate = 1.5;
    EXPECT_THROW(match_views(obs, obs, bad, 1), ConfigurationError);
}

TEST(Dlt, IdentityCorrespondences) {
    std::mt19937_64 rng(1);
    const auto m = synthesize(Eigen::Matrix3d::Identity(), 20, rng);
    const Eigen::Matrix3d G = estimate_homography_dlt(m).matrix;
    EXPECT_LE((G / G(2, 2) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Dlt, RecoversSynthesizedHomographies) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::Matrix3d G = sample_g();
        std::normal_distribution<double> n(0.0, 1.0);
        G(0, 0) += 0.05 * n(rng);
        G(1, 0) += 0.05 * n(rng);
        G(0, 2) += 10.0 * n(rng);
        G(2, 1) += 1e-5 * n(rng);
        const auto four = synthesize(G, 4, rng);
        const auto H4 = estimate_homography_dlt(four);
        EXPECT_EQ(H4.space, homography::Space::Pixel);
        EXPECT_LE(max_reprojection(H4.matrix, four), 1e-9);
        const auto many = synthesize(G, 60, rng);
        EXPECT_LE(max_reprojection(estimate_homography_dlt(many).matrix, many), 1e-6);
    }
}

TEST(Dlt, DegenerateInputs) {
    std::vector<Correspondence> collinear;
    for (int i = 0; i < 4; ++i) {
        collinear.push_back({Eigen::Vector2d(i * 10.0, i * 5.0), Eigen::Vector2d(i * 10.0 + 1.0, i * 5.0)});
    }
    EXPECT_THROW(estimate_homography_dlt(collinear), EstimationError);
    collinear.pop_back();
    EXPECT_THROW(estimate_homography_dlt(collinear), EstimationError);
}

TEST(Dlt, AgreesWithPlaneInducedHomography) {
    std::mt19937_64 rng(19);
    const auto K = k500();
    for (int trial = 0; trial < 20; ++trial) {
        Pose plane;
        plane.rotation = Eigen::AngleAxisd(0.3, test_support::random_unit(rng)).toRotationMatrix();
        plane.translation = Eigen::Vector3d(0.01, 0.02, -0.01);
        const auto scene = PlanarScene::generate(plane, 80, 0.06, 100 + static_cast<std::uint64_t>(trial));
        const Pose target = [&] {
            Pose p;
            p.rotation = plane.rotation * Eigen::Vector3d(1, -1, -1).asDiagonal();
            p.translation = plane.transform(Eigen::Vector3d(0, 0, 0.18));
            return p;
        }();
        Pose current = target;
        current.rotation = Eigen::AngleAxisd(0.08, test_support::random_unit(rng)) * current.rotation;
        current.translation += 0.01 * test_support::random_unit(rng);
        const auto ot = project_scene(scene, target, K);
        const auto oc = project_scene(scene, current, K);
        std::vector<Correspondence> m;
        for (std::size_t i = 0; i < ot.size(); ++i) {
            if (ot[i].inside_fov && oc[i].inside_fov) {
                m.push_back({ot[i].pixel, oc[i].pixel});
            }
        }
        ASSERT_GE(m.size(), 10u);
        const Eigen::Matrix3d G_true = plane_induced_homography(target, current, plane, K, K);
        EXPECT_LE(max_reprojection(G_true, m), 1e-6);
        const Eigen::Matrix3d G = estimate_homography_dlt(m).matrix;
        EXPECT_LE(max_reprojection(G, m), 1e-6);
        EXPECT_LE((G / G(2, 2) - G_true / G_true(2, 2)).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(Ransac, CleanDataEqualsDltOnAllMatches) {
    std::mt19937_64 rng(4);
    const auto m = synthesize(sample_g(), 50, rng);
    const auto r = estimate_homography_ransac(m, {}, 3);
    EXPECT_EQ(r.inlier_count, 50);
    const Eigen::Matrix3d G = estimate_homography_dlt(m).matrix;
    EXPECT_LE((r.G.matrix / r.G.matrix(2, 2) - G / G(2, 2)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Ransac, ThirtyPercentOutliersRecoverTheMask) {
    std::mt19937_64 rng(5);
    auto obs = grid_observations(100);
    std::vector<FeatureObservation> cur = obs;
    for (auto& o : cur) {
        o.pixel = apply_homography(sample_g(), o.pixel);
    }
    Corruption c;
    c.outlier_rate = 0.3;
    int exact = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto m = match_views(cur, obs, c, seed);
        const auto corr = m.correspondences();
        const auto r = estimate_homography_ransac(corr, {}, seed);
        const auto truth = m.ground_truth_inliers();
        exact += r.inliers == truth ? 1 : 0;
        for (std::size_t i = 0; i < corr.size(); ++i) {
            if (truth[i]) {
                EXPECT_LE(transfer_error(r.G.matrix, corr[i]), 2.0);
            }
        }
    }
    EXPECT_GE(exact, 19);
}

TEST(Ransac, FailureAndDeterminism) {
    std::mt19937_64 rng(6);
    const auto three = synthesize(sample_g(), 3, rng);
    EXPECT_THROW(estimate_homography_ransac(three, {}, 1), EstimationError);
    auto m = synthesize(sample_g(), 40, rng);
    std::uniform_real_distribution<double> u(0.0, 640.0);
    for (std::size_t i = 0; i < m.size(); i += 3) {
        m[i].current = Eigen::Vector2d(u(rng), u(rng));
    }
    const auto a = estimate_homography_ransac(m, {}, 99);
    const auto b = estimate_homography_ransac(m, {}, 99);
    EXPECT_TRUE(a.G.matrix == b.G.matrix);
    EXPECT_EQ(a.inliers, b.inliers);
    EXPECT_EQ(a.iterations, b.iterations);
    RansacParams bad;
    bad.confidence = 1.5;
    EXPECT_THROW(estimate_homography_ransac(m, bad, 1), ConfigurationError);
}

TEST(MeanPairwiseDistance, Examples) {
    const std::vector<Eigen::Vector2d> a = {{0, 0}, {10, 5}, {-3, 2}};
    std::vector<Eigen::Vector2d> b = a;
    EXPECT_EQ(mean_pairwise_distance(a, b), 0.0);
    for (auto& p : b) {
        p += Eigen::Vector2d(3, 4);
    }
    EXPECT_NEAR(mean_pairwise_distance(a, b), 5.0, 1e-15);
    EXPECT_THROW(mean_pairwise_distance(std::vector<Eigen::Vector2d>{}, std::vector<Eigen::Vector2d>{}),
                 ConfigurationError);
    EXPECT_THROW(mean_pairwise_distance(a, std::vector<Eigen::Vector2d>(2)), ConfigurationError);
}

TEST(MeanPairwiseDistance, BruteForceAndMask) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 500.0);
    std::vector<Correspondence> m;
    std::vector<bool> mask;
    double sum = 0.0, masked = 0.0;
    int count = 0;
    for (int i = 0; i < 57; ++i) {
        m.push_back({{u(rng), u(rng)}, {u(rng), u(rng)}});
        mask.push_back(i % 3 == 0);
        const double d = (m.back().target - m.back().current).norm();
        sum += d;
        if (mask.back()) {
            masked += d;
            ++count;
        }
    }
    EXPECT_NEAR(mean_pairwise_distance(m), sum / 57.0, 1e-12);
    EXPECT_NEAR(mean_pairwise_distance(m, &mask), masked / count, 1e-12);
}

TEST(MeanPairwiseDistance, ZeroUnderTrueHomography) {
    std::mt19937_64 rng(10);
    const auto m = synthesize(sample_g(), 30, rng);
    EXPECT_LE(mean_pairwise_distance(m, nullptr, sample_g()), 1e-9);
}

TEST(PlanarScene, GenerationIsSeededAndBounded) {
    const auto a = ground_plane(50, 4), b = ground_plane(50, 4), c = ground_plane(50, 5);
    ASSERT_EQ(a.features.size(), 50u);
    bool differs = false;
    for (std::size_t i = 0; i < 50; ++i) {
        EXPECT_EQ(a.features[i].position, b.features[i].position);
        EXPECT_LE(a.features[i].position.cwiseAbs().maxCoeff(), 0.1);
        EXPECT_EQ(a.features[i].id, static_cast<int>(i));
        differs = differs || a.features[i].position != c.features[i].position;
    }
    EXPECT_TRUE(differs);
}
