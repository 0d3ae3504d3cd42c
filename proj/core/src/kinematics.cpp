#include "hrcm/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>

#include <nlohmann/json.hpp>

#include "hrcm/errors.hpp"

namespace hrcm::kinematics {

namespace {

constexpr double kDeg = M_PI / 180.0;

void check_dof(const ChainModel& chain, const Eigen::VectorXd& q) {
    if (q.size() != chain.dof()) {
        std::ostringstream msg;
        msg << "joint vector has " << q.size() << " entries, chain has " << chain.dof() << " joints";
        throw ConfigurationError(msg.str());
    }
}

struct JointFrame {
    Eigen::Vector3d axis;    // world
    Eigen::Vector3d origin;  // world
};

// Walks the chain once, returning per-joint world axes and the flange pose.
Pose walk(const ChainModel& chain, const Eigen::VectorXd& q, std::vector<JointFrame>* frames) {
    Pose T;
    const auto& joints = chain.joints();
    for (std::size_t j = 0; j < joints.size(); ++j) {
        T = T * joints[j].origin;
        if (frames != nullptr) {
            frames->push_back({T.rotation * joints[j].axis, T.translation});
        }
        Pose rot;
        rot.rotation = Eigen::AngleAxisd(q[static_cast<Eigen::Index>(j)], joints[j].axis).toRotationMatrix();
        T = T * rot;
    }
    return T;
}

Eigen::Vector3d read_vec3(const nlohmann::json& j, const char* key, const Eigen::Vector3d& fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3) {
        throw ConfigurationError(std::string("expected 3-vector for '") + key + "'");
    }
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

Pose read_pose(const nlohmann::json& j) {
    return Pose::from_xyz_rpy(read_vec3(j, "xyz", Eigen::Vector3d::Zero()),
                              read_vec3(j, "rpy", Eigen::Vector3d::Zero()));
}

nlohmann::json write_pose(const Pose& p) {
    // ZYX Euler: R = Rz(yaw) Ry(pitch) Rx(roll)
    const Eigen::Vector3d ypr = p.rotation.eulerAngles(2, 1, 0);
    return {{"xyz", {p.translation.x(), p.translation.y(), p.translation.z()}},
            {"rpy", {ypr[2], ypr[1], ypr[0]}}};
}

} // namespace

Pose Pose::from_xyz_rpy(const Eigen::Vector3d& xyz, const Eigen::Vector3d& rpy) {
    Pose p;
    p.rotation = (Eigen::AngleAxisd(rpy.z(), Eigen::Vector3d::UnitZ()) *
                  Eigen::AngleAxisd(rpy.y(), Eigen::Vector3d::UnitY()) *
                  Eigen::AngleAxisd(rpy.x(), Eigen::Vector3d::UnitX()))
                     .toRotationMatrix();
    p.translation = xyz;
    return p;
}

Pose Pose::operator*(const Pose& rhs) const {
    Pose out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
}

Pose Pose::inverse() const {
    Pose out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
}

bool Pose::is_orthonormal(double tol) const {
    const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

ChainModel::ChainModel(std::vector<RevoluteJoint> joints, Pose endoscope_mount, double endoscope_length)
    : joints_(std::move(joints)), mount_(std::move(endoscope_mount)), length_(endoscope_length) {
    if (joints_.empty()) {
        throw ConfigurationError("chain has no joints");
    }
    for (std::size_t j = 0; j < joints_.size(); ++j) {
        const double n = joints_[j].axis.norm();
        if (std::abs(n - 1.0) > 1e-9) {
            throw ConfigurationError("joint " + std::to_string(j) + " axis is not unit length");
        }
        if (!joints_[j].origin.is_orthonormal(1e-9)) {
            throw ConfigurationError("joint " + std::to_string(j) + " origin rotation is not orthonormal");
        }
        if (joints_[j].limits && joints_[j].limits->min > joints_[j].limits->max) {
            throw ConfigurationError("joint " + std::to_string(j) + " has min limit above max limit");
        }
    }
    if (!(length_ > 0.0)) {
        throw ConfigurationError("endoscope_length must be positive");
    }
    if (!mount_.is_orthonormal(1e-9)) {
        throw ConfigurationError("endoscope mount rotation is not orthonormal");
    }
}

ChainModel ChainModel::default_chain() {
    // Link offsets follow the LBR Med 7 R800 layout (0.34/0.40/0.40/0.126 m).
    const double lim[7] = {170, 120, 170, 120, 170, 120, 175};
    const double dz[7] = {0.34, 0.0, 0.40, 0.0, 0.40, 0.0, 0.126};
    const Eigen::Vector3d axes[7] = {Eigen::Vector3d::UnitZ(), Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ(),
                                     -Eigen::Vector3d::UnitY(), Eigen::Vector3d::UnitZ(), Eigen::Vector3d::UnitY(),
                                     Eigen::Vector3d::UnitZ()};
    std::vector<RevoluteJoint> joints;
    for (int j = 0; j < 7; ++j) {
        RevoluteJoint joint;
        joint.origin.translation = Eigen::Vector3d(0.0, 0.0, dz[j]);
        joint.axis = axes[j];
        joint.limits = JointLimits{-lim[j] * kDeg, lim[j] * kDeg};
        joints.push_back(joint);
    }
    const double scope = 0.30;
    const double clamp = 0.05;
    Pose mount;
    mount.translation = Eigen::Vector3d(0.0, 0.0, clamp + scope);
    return ChainModel(std::move(joints), mount, scope);
}

ChainModel ChainModel::with_base(const Pose& base) const {
    auto joints = joints_;
    joints.front().origin = base * joints.front().origin;
    return ChainModel(std::move(joints), mount_, length_);
}

void ChainModel::require_rcm_capable() const {
    if (dof() < kMinRcmDof) {
        throw ConfigurationError("chain has " + std::to_string(dof()) +
                                 " joints; a 4-DOF task under the RCM constraint needs at least 6");
    }
}

bool ChainModel::has_limits() const {
    for (const auto& j : joints_) {
        if (j.limits) {
            return true;
        }
    }
    return false;
}

bool ChainModel::within_limits(const Eigen::VectorXd& q) const {
    check_dof(*this, q);
    for (int j = 0; j < dof(); ++j) {
        const auto& lim = joints_[static_cast<std::size_t>(j)].limits;
        if (lim && (q[j] < lim->min || q[j] > lim->max)) {
            return false;
        }
    }
    return true;
}

bool ChainModel::clamp_to_limits(Eigen::VectorXd& q) const {
    check_dof(*this, q);
    bool clamped = false;
    for (int j = 0; j < dof(); ++j) {
        const auto& lim = joints_[static_cast<std::size_t>(j)].limits;
        if (!lim) {
            continue;
        }
        const double c = std::clamp(q[j], lim->min, lim->max);
        clamped = clamped || c != q[j];
        q[j] = c;
    }
    return clamped;
}

Pose flange_pose(const ChainModel& chain, const Eigen::VectorXd& q) {
    check_dof(chain, q);
    return walk(chain, q, nullptr);
}

EndoscopeFrames forward_kinematics(const ChainModel& chain, const Eigen::VectorXd& q) {
    EndoscopeFrames out;
    out.pose_ip1 = flange_pose(chain, q) * chain.endoscope_mount();
    out.pose_i = out.pose_ip1;
    out.pose_i.translation -= chain.endoscope_length() * out.pose_ip1.z_axis();
    return out;
}

Eigen::MatrixXd geometric_jacobian(const ChainModel& chain, const Eigen::VectorXd& q, const Eigen::Vector3d& point,
                                   std::optional<int> parent_joint) {
    check_dof(chain, q);
    const int n = chain.dof();
    const int parent = parent_joint.value_or(n - 1);
    if (parent < 0 || parent >= n) {
        throw ConfigurationError("parent joint index out of range");
    }
    std::vector<JointFrame> frames;
    frames.reserve(static_cast<std::size_t>(n));
    walk(chain, q, &frames);

    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(6, n);
    for (int j = 0; j <= parent; ++j) {
        const auto& f = frames[static_cast<std::size_t>(j)];
        J.block<3, 1>(0, j) = f.axis.cross(point - f.origin);
        J.block<3, 1>(3, j) = f.axis;
    }
    return J;
}

Eigen::MatrixXd translational_jacobian(const Eigen::MatrixXd& jacobian) {
    if (jacobian.rows() != 6) {
        throw ConfigurationError("translational_jacobian expects a 6-row Jacobian");
    }
    return jacobian.topRows(3);
}

Eigen::VectorXd solve_camera_ik(const ChainModel& chain, const Pose& target, const Eigen::VectorXd& q_seed,
                                const IkOptions& options) {
    check_dof(chain, q_seed);
    Eigen::VectorXd q = q_seed;
    double err_norm = 0.0;
    for (int it = 0; it < options.max_iterations; ++it) {
        const Pose cam = forward_kinematics(chain, q).pose_ip1;
        Eigen::Matrix<double, 6, 1> err;
        err.head<3>() = target.translation - cam.translation;
        const Eigen::AngleAxisd aa(target.rotation * cam.rotation.transpose());
        err.tail<3>() = aa.angle() * aa.axis();
        err_norm = err.norm();
        if (err_norm < options.tolerance) {
            return q;
        }
        const Eigen::MatrixXd J = geometric_jacobian(chain, q, cam.translation);
        const Eigen::MatrixXd JJt =
            J * J.transpose() + options.damping * options.damping * Eigen::MatrixXd::Identity(6, 6);
        Eigen::VectorXd dq = J.transpose() * JJt.ldlt().solve(err);
        const double step = dq.cwiseAbs().maxCoeff();
        if (step > 0.2) {
            dq *= 0.2 / step;
        }
        q += dq;
        chain.clamp_to_limits(q);
    }
    std::ostringstream msg;
    msg << "camera IK did not converge (residual " << err_norm << ")";
    throw NumericError(msg.str());
}

ChainModel chain_from_json(const nlohmann::json& j) {
    try {
        std::vector<RevoluteJoint> joints;
        for (const auto& jj : j.at("joints")) {
            RevoluteJoint joint;
            if (jj.contains("origin")) {
                joint.origin = read_pose(jj.at("origin"));
            }
            joint.axis = read_vec3(jj, "axis", Eigen::Vector3d::UnitZ());
            if (jj.contains("limits")) {
                const auto& l = jj.at("limits");
                joint.limits = JointLimits{l.at(0).get<double>(), l.at(1).get<double>()};
            }
            joints.push_back(joint);
        }
        const Pose mount = j.contains("endoscope_mount") ? read_pose(j.at("endoscope_mount")) : Pose{};
        return ChainModel(std::move(joints), mount, j.at("endoscope_length").get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("invalid chain description: ") + e.what());
    }
}

nlohmann::json chain_to_json(const ChainModel& chain) {
    nlohmann::json joints = nlohmann::json::array();
    for (const auto& jt : chain.joints()) {
        nlohmann::json jj = {{"origin", write_pose(jt.origin)}, {"axis", {jt.axis.x(), jt.axis.y(), jt.axis.z()}}};
        if (jt.limits) {
            jj["limits"] = {jt.limits->min, jt.limits->max};
        }
        joints.push_back(jj);
    }
    return {{"joints", joints},
            {"endoscope_mount", write_pose(chain.endoscope_mount())},
            {"endoscope_length", chain.endoscope_length()}};
}

ChainModel load_chain(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigurationError("cannot open chain file " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError("chain file " + path.string() + " is not valid JSON: " + e.what());
    }
    return chain_from_json(j);
}

} // namespace hrcm::kinematics
