#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <nlohmann/json_fwd.hpp>

namespace hrcm::kinematics {

/// Rigid transform. The rotation maps child-frame coordinates into the parent
/// (usually world) frame, the translation is the child origin in the parent.
struct Pose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static Pose from_xyz_rpy(const Eigen::Vector3d& xyz, const Eigen::Vector3d& rpy);

    Pose operator*(const Pose& rhs) const;
    Eigen::Vector3d transform(const Eigen::Vector3d& point) const { return rotation * point + translation; }
    Pose inverse() const;

    /// Camera convention: optical axis is the local +z.
    Eigen::Vector3d z_axis() const { return rotation.col(2); }

    bool is_orthonormal(double tol = 1e-9) const;
};

struct JointLimits {
    double min = -M_PI;
    double max = M_PI;
};

struct RevoluteJoint {
    Pose origin;  // fixed parent-to-joint transform, applied before the joint rotation
    Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
    std::optional<JointLimits> limits;
};

/// Serial chain of revolute joints carrying a rigid endoscope. The camera frame
/// sits at the distal tip; the proximal point lies endoscope_length behind it
/// along the negative optical axis.
class ChainModel {
public:
    ChainModel(std::vector<RevoluteJoint> joints, Pose endoscope_mount, double endoscope_length);

    /// 7-joint arm with LBR-Med-like link lengths and a 0.3 m scope.
    static ChainModel default_chain();

    /// 4 task DOF + 3 RCM rows - 1 extra unknown (lambda).
    static constexpr int kMinRcmDof = 6;

    int dof() const { return static_cast<int>(joints_.size()); }
    const std::vector<RevoluteJoint>& joints() const { return joints_; }
    const Pose& endoscope_mount() const { return mount_; }
    double endoscope_length() const { return length_; }

    /// Copy of this chain with `base` prepended to the first joint origin.
    ChainModel with_base(const Pose& base) const;

    /// Throws ConfigurationError for chains too short to servo under the RCM.
    void require_rcm_capable() const;

    bool has_limits() const;
    bool within_limits(const Eigen::VectorXd& q) const;
    /// Clamps q into the joint limits. Returns true when any joint was clamped.
    bool clamp_to_limits(Eigen::VectorXd& q) const;

private:
    std::vector<RevoluteJoint> joints_;
    Pose mount_;
    double length_;
};

/// pose_i: proximal endoscope point x_i; pose_ip1: camera frame x_{i+1}.
struct EndoscopeFrames {
    Pose pose_i;
    Pose pose_ip1;
};

EndoscopeFrames forward_kinematics(const ChainModel& chain, const Eigen::VectorXd& q);

/// Flange (last joint) frame in W.
Pose flange_pose(const ChainModel& chain, const Eigen::VectorXd& q);

/// 6xn geometric Jacobian of a world point rigidly attached to the link driven
/// by joint `parent_joint` (0-based; default is the last joint). Rows 0-2 are
/// linear velocity of the point, rows 3-5 angular velocity. Columns of joints
/// distal to the parent are zero.
Eigen::MatrixXd geometric_jacobian(const ChainModel& chain, const Eigen::VectorXd& q,
                                   const Eigen::Vector3d& point,
                                   std::optional<int> parent_joint = std::nullopt);

/// Top three rows of a 6xn Jacobian.
Eigen::MatrixXd translational_jacobian(const Eigen::MatrixXd& jacobian);

struct IkOptions {
    int max_iterations = 500;
    double tolerance = 1e-10;
    double damping = 1e-3;
};

/// Damped least-squares position+orientation IK for the camera frame.
/// Throws NumericError if the target is not reached within tolerance.
Eigen::VectorXd solve_camera_ik(const ChainModel& chain, const Pose& target,
                                const Eigen::VectorXd& q_seed, const IkOptions& options = {});

ChainModel chain_from_json(const nlohmann::json& j);
nlohmann::json chain_to_json(const ChainModel& chain);
ChainModel load_chain(const std::filesystem::path& path);

} // namespace hrcm::kinematics
