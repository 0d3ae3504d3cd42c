#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <string_view>

#include <Eigen/Core>

namespace hrcm::homography {

/// Radial/tangential coefficients (k1, k2, p1, p2, k3), applied in normalized coordinates.
using Distortion = std::array<double, 5>;

struct CameraIntrinsics {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    Distortion distortion{};

    Eigen::Matrix3d matrix() const;
    Eigen::Matrix3d inverse_matrix() const;
    /// Throws ConfigurationError unless fx, fy > 0 and everything is finite.
    void validate() const;
};

enum class Space { Pixel, Normalized };

/// 3x3 homography tagged with the coordinates it acts on: G (pixel) or H (normalized).
struct Homography {
    Eigen::Matrix3d matrix = Eigen::Matrix3d::Identity();
    Space space = Space::Pixel;
};

/// Which four of the six camera body DOF remain controlled under the RCM.
/// A: (v_x, v_y, v_z, w_z). B: (v_z, w_x, w_y, w_z).
enum class ProjectionMode { A, B };

ProjectionMode parse_mode(std::string_view text);
std::string_view to_string(ProjectionMode mode);

struct TaskError {
    Eigen::Vector3d e_v = Eigen::Vector3d::Zero();
    Eigen::Vector3d e_w = Eigen::Vector3d::Zero();
    Eigen::Vector4d projected = Eigen::Vector4d::Zero();
    ProjectionMode mode = ProjectionMode::B;
};

/// Scales H so its middle singular value is 1, flipping the sign so det(H) > 0.
/// Throws DegenerateGeometryError for (near-)singular input.
Eigen::Matrix3d normalize_homography(const Eigen::Matrix3d& H);

/// H = K^-1 G K, normalized.
Homography pixel_to_normalized(const Homography& G, const CameraIntrinsics& K);
/// Variant for views captured with different crops: H = K_current^-1 G K_target.
Homography pixel_to_normalized(const Homography& G, const CameraIntrinsics& K_current,
                               const CameraIntrinsics& K_target);

/// e_v = (H - I) m*, [e_w]x = H - H^T. `projected` is filled for `mode`.
TaskError task_error(const Homography& H, const Eigen::Vector3d& m_star, ProjectionMode mode = ProjectionMode::B);

Eigen::Matrix<double, 4, 6> projector(ProjectionMode mode);

Eigen::Vector4d project_task(const Eigen::Vector3d& e_v, const Eigen::Vector3d& e_w, ProjectionMode mode);

/// P blockdiag(R_WC^T, R_WC^T) J_ip1: the world-frame camera Jacobian expressed
/// in the camera body frame and reduced to the controlled DOF.
Eigen::MatrixXd task_jacobian(const Eigen::MatrixXd& j_ip1, const Eigen::Matrix3d& r_wc, ProjectionMode mode);

/// Fixed-length moving average over projected task errors.
class MovingAverage {
public:
    static constexpr std::size_t kDefaultLength = 10;

    explicit MovingAverage(std::size_t length = kDefaultLength);

    /// Pushes e and returns the mean of what is buffered (partial buffers included).
    Eigen::Vector4d push(const Eigen::Vector4d& e);
    void reset() { buffer_.clear(); }

    std::size_t length() const { return length_; }
    std::size_t size() const { return buffer_.size(); }

private:
    std::size_t length_;
    std::deque<Eigen::Vector4d> buffer_;
};

} // namespace hrcm::homography
