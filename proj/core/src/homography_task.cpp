#include "hrcm/homography_task.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "hrcm/errors.hpp"

namespace hrcm::homography {

Eigen::Matrix3d CameraIntrinsics::matrix() const {
    Eigen::Matrix3d K;
    K << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return K;
}

Eigen::Matrix3d CameraIntrinsics::inverse_matrix() const {
    Eigen::Matrix3d Ki;
    Ki << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
    return Ki;
}

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
        throw ConfigurationError("camera focal lengths must be positive and finite");
    }
    if (!std::isfinite(cx) || !std::isfinite(cy)) {
        throw ConfigurationError("camera principal point must be finite");
    }
    for (double d : distortion) {
        if (!std::isfinite(d)) {
            throw ConfigurationError("distortion coefficients must be finite");
        }
    }
}

ProjectionMode parse_mode(std::string_view text) {
    if (text == "a" || text == "A") {
        return ProjectionMode::A;
    }
    if (text == "b" || text == "B") {
        return ProjectionMode::B;
    }
    throw ConfigurationError("unknown projection mode '" + std::string(text) + "' (expected a or b)");
}

std::string_view to_string(ProjectionMode mode) {
    return mode == ProjectionMode::A ? "a" : "b";
}

Eigen::Matrix3d normalize_homography(const Eigen::Matrix3d& H) {
    if (!H.allFinite()) {
        throw DegenerateGeometryError("homography has non-finite entries");
    }
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(H);
    const Eigen::Vector3d s = svd.singularValues();
    if (s[2] <= 1e-12 * std::max(1.0, s[0])) {
        throw DegenerateGeometryError("homography is singular");
    }
    Eigen::Matrix3d out = H / s[1];
    if (out.determinant() < 0.0) {
        out = -out;
    }
    return out;
}

Homography pixel_to_normalized(const Homography& G, const CameraIntrinsics& K) {
    return pixel_to_normalized(G, K, K);
}

Homography pixel_to_normalized(const Homography& G, const CameraIntrinsics& K_current,
                               const CameraIntrinsics& K_target) {
    if (G.space != Space::Pixel) {
        throw ConfigurationError("pixel_to_normalized expects a pixel-space homography");
    }
    Homography H;
    H.space = Space::Normalized;
    H.matrix = normalize_homography(K_current.inverse_matrix() * G.matrix * K_target.matrix());
    return H;
}

TaskError task_error(const Homography& H, const Eigen::Vector3d& m_star, ProjectionMode mode) {
    if (H.space != Space::Normalized) {
        throw ConfigurationError("task_error expects a normalized-space homography");
    }
    const Eigen::Matrix3d& h = H.matrix;
    TaskError e;
    e.e_v = (h - Eigen::Matrix3d::Identity()) * m_star;
    e.e_w = Eigen::Vector3d(h(2, 1) - h(1, 2), h(0, 2) - h(2, 0), h(1, 0) - h(0, 1));
    e.mode = mode;
    e.projected = project_task(e.e_v, e.e_w, mode);
    return e;
}

Eigen::Matrix<double, 4, 6> projector(ProjectionMode mode) {
    Eigen::Matrix<double, 4, 6> P = Eigen::Matrix<double, 4, 6>::Zero();
    if (mode == ProjectionMode::A) {
        P(0, 0) = P(1, 1) = P(2, 2) = 1.0;
        P(3, 5) = 1.0;
    } else {
        P(0, 2) = 1.0;
        P(1, 3) = P(2, 4) = P(3, 5) = 1.0;
    }
    return P;
}

Eigen::Vector4d project_task(const Eigen::Vector3d& e_v, const Eigen::Vector3d& e_w, ProjectionMode mode) {
    if (mode == ProjectionMode::A) {
        return {e_v.x(), e_v.y(), e_v.z(), e_w.z()};
    }
    return {e_v.z(), e_w.x(), e_w.y(), e_w.z()};
}

Eigen::MatrixXd task_jacobian(const Eigen::MatrixXd& j_ip1, const Eigen::Matrix3d& r_wc, ProjectionMode mode) {
    if (j_ip1.rows() != 6) {
        throw ConfigurationError("task_jacobian expects a 6-row camera Jacobian");
    }
    Eigen::MatrixXd body(6, j_ip1.cols());
    body.topRows(3) = r_wc.transpose() * j_ip1.topRows(3);
    body.bottomRows(3) = r_wc.transpose() * j_ip1.bottomRows(3);
    return projector(mode) * body;
}

MovingAverage::MovingAverage(std::size_t length) : length_(length) {
    if (length == 0) {
        throw ConfigurationError("moving average length must be at least 1");
    }
}

Eigen::Vector4d MovingAverage::push(const Eigen::Vector4d& e) {
    buffer_.push_back(e);
    if (buffer_.size() > length_) {
        buffer_.pop_front();
    }
    Eigen::Vector4d sum = Eigen::Vector4d::Zero();
    for (const auto& v : buffer_) {
        sum += v;
    }
    return sum / static_cast<double>(buffer_.size());
}

} // namespace hrcm::homography
