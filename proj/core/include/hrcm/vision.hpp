#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hrcm/homography_task.hpp"
#include "hrcm/kinematics.hpp"

namespace hrcm::vision {

using homography::CameraIntrinsics;
using homography::Distortion;
using homography::Homography;
using kinematics::Pose;

/// A textured point on the scene plane, in plane coordinates (meters).
struct Feature {
    int id = 0;
    Eigen::Vector2d position = Eigen::Vector2d::Zero();
};

/// Planar surgical scene. The plane pose's x/y columns span the plane, its
/// z column is the plane normal, its translation the plane origin.
struct PlanarScene {
    Pose plane_pose;
    std::vector<Feature> features;
    std::uint64_t seed = 0;

    /// `count` features drawn uniformly over [-half_extent, half_extent]^2.
    static PlanarScene generate(const Pose& plane_pose, int count, double half_extent, std::uint64_t seed);

    Eigen::Vector3d world_point(const Feature& f) const;
    void validate() const;
};

struct FeatureObservation {
    int id = 0;
    Eigen::Vector2d pixel = Eigen::Vector2d::Constant(std::numeric_limits<double>::quiet_NaN());
    bool inside_fov = false;
};

/// Visible region of an image: a circle (the endoscope boundary) optionally
/// intersected with an axis-aligned rectangle [origin, origin + size].
struct FovMask {
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    double radius = std::numeric_limits<double>::infinity();
    std::optional<Eigen::Vector2d> rect_origin;
    std::optional<Eigen::Vector2d> rect_size;

    bool contains(const Eigen::Vector2d& p) const;
};

Eigen::Vector2d distort(const Eigen::Vector2d& p, const Distortion& d);
/// Fixed-point inverse of distort(). Throws NumericError when it does not reach
/// `tolerance` within `max_iterations`.
Eigen::Vector2d undistort(const Eigen::Vector2d& p, const Distortion& d, int max_iterations = 20,
                          double tolerance = 1e-10);

/// Pixel -> normalized -> undistorted -> pixel.
Eigen::Vector2d undistort_pixel(const Eigen::Vector2d& pixel, const CameraIntrinsics& K);
std::vector<FeatureObservation> undistort_observations(std::span<const FeatureObservation> obs,
                                                       const CameraIntrinsics& K);

/// Pinhole projection with distortion; features behind the camera come back
/// with inside_fov = false and NaN pixels. Throws DegenerateGeometryError when
/// no feature lies in front of the camera.
std::vector<FeatureObservation> project_scene(const PlanarScene& scene, const Pose& camera,
                                              const CameraIntrinsics& K, const FovMask& mask = {});

/// K' after cropping at `crop_origin` and rescaling by `scale`.
CameraIntrinsics crop_rescale_intrinsics(const CameraIntrinsics& K, const Eigen::Vector2d& crop_origin, double scale);

/// Raw sensor + endoscopic circle + the largest centered crop of the given
/// aspect ratio, rescaled to a fixed output width.
class EndoscopeCamera {
public:
    EndoscopeCamera(CameraIntrinsics sensor, Eigen::Vector2d circle_center, double circle_radius,
                    double crop_aspect, double output_width);

    const CameraIntrinsics& sensor() const { return sensor_; }
    const Eigen::Vector2d& circle_center() const { return circle_center_; }
    double circle_radius() const { return circle_radius_; }
    const Eigen::Vector2d& crop_origin() const { return crop_origin_; }
    const Eigen::Vector2d& crop_size() const { return crop_size_; }
    double scale() const { return scale_; }

    /// Intrinsics of the cropped, rescaled image.
    const CameraIntrinsics& intrinsics() const { return cropped_; }
    Eigen::Vector2d image_size() const { return crop_size_ * scale_; }
    /// Circle and crop expressed in output-image pixels.
    FovMask output_mask() const;

    /// Observations in output-image pixels (distorted, like a raw frame).
    std::vector<FeatureObservation> render(const PlanarScene& scene, const Pose& camera) const;

private:
    CameraIntrinsics sensor_;
    Eigen::Vector2d circle_center_;
    double circle_radius_;
    Eigen::Vector2d crop_origin_;
    Eigen::Vector2d crop_size_;
    double scale_;
    CameraIntrinsics cropped_;
};

struct Corruption {
    double noise_px = 0.0;      // Gaussian sigma on current-view pixels
    double outlier_rate = 0.0;  // fraction re-drawn uniformly over the image
    double dropout_rate = 0.0;  // fraction discarded
    Eigen::Vector2d image_size = Eigen::Vector2d(640.0, 640.0);

    void validate() const;
};

/// Estimator-facing correspondence: target-view pixel -> current-view pixel.
struct Correspondence {
    Eigen::Vector2d target;
    Eigen::Vector2d current;
};

struct Match {
    int id = 0;
    Eigen::Vector2d target;
    Eigen::Vector2d current;
    bool synthetic_outlier = false;  // ground truth only
};

struct MatchSet {
    std::vector<Match> pairs;

    std::size_t size() const { return pairs.size(); }
    std::vector<Correspondence> correspondences() const;
    std::vector<bool> ground_truth_inliers() const;
};

/// Id-based matching over features visible in both views, then dropout,
/// outlier replacement and pixel noise, all driven by `seed`. Dropout is
/// applied first; the outlier count is round(rate * remaining).
/// Throws InsufficientFeaturesError when fewer than 4 matches remain.
MatchSet match_views(std::span<const FeatureObservation> current, std::span<const FeatureObservation> target,
                     const Corruption& corruption, std::uint64_t seed);

/// Hartley-normalized DLT. G maps target pixels to current pixels, scaled to a
/// unit middle singular value. Throws EstimationError for < 4 points or a
/// rank-deficient design matrix.
Homography estimate_homography_dlt(std::span<const Correspondence> matches);

struct RansacParams {
    double threshold_px = 2.0;
    double confidence = 0.995;
    int max_iterations = 2000;

    void validate() const;
};

struct RansacResult {
    Homography G;
    std::vector<bool> inliers;
    int inlier_count = 0;
    int iterations = 0;
};

/// 4-point RANSAC with adaptive iteration count and iterative refit on the
/// consensus set. Deterministic for a given seed. Throws EstimationError when
/// no model gathers 4 inliers.
RansacResult estimate_homography_ransac(std::span<const Correspondence> matches, const RansacParams& params,
                                        std::uint64_t seed);

/// |pi(G t) - c| for one correspondence.
double transfer_error(const Eigen::Matrix3d& G, const Correspondence& c);

Eigen::Vector2d apply_homography(const Eigen::Matrix3d& G, const Eigen::Vector2d& p);

/// Mean Euclidean distance between corresponding points, with `target`
/// optionally mapped through G first. Throws ConfigurationError on empty or
/// unequal inputs.
double mean_pairwise_distance(std::span<const Eigen::Vector2d> target, std::span<const Eigen::Vector2d> current,
                              const std::optional<Eigen::Matrix3d>& G = std::nullopt);
/// Same over correspondences, restricted to `mask` when given.
double mean_pairwise_distance(std::span<const Correspondence> matches, const std::vector<bool>* mask = nullptr,
                              const std::optional<Eigen::Matrix3d>& G = std::nullopt);

/// Analytic plane-induced pixel homography from the target camera to the
/// current camera for a plane given in world coordinates.
Eigen::Matrix3d plane_induced_homography(const Pose& target_camera, const Pose& current_camera,
                                         const Pose& plane_pose, const CameraIntrinsics& K_target,
                                         const CameraIntrinsics& K_current);

} // namespace hrcm::vision
