#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "hrcm/kinematics.hpp"

namespace hrcm::test_support {

inline Eigen::Vector3d random_unit(std::mt19937_64& rng) {
    std::normal_distribution<double> n;
    Eigen::Vector3d v;
    do {
        v = Eigen::Vector3d(n(rng), n(rng), n(rng));
    } while (v.norm() < 1e-3);
    return v.normalized();
}

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> a(-M_PI, M_PI);
    return Eigen::AngleAxisd(a(rng), random_unit(rng)).toRotationMatrix();
}

/// Chain with 6-8 joints, arbitrary unit axes and rigid offsets.
inline kinematics::ChainModel random_chain(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> dof(6, 8);
    std::uniform_real_distribution<double> off(-0.3, 0.3);
    const int n = dof(rng);
    std::vector<kinematics::RevoluteJoint> joints;
    for (int j = 0; j < n; ++j) {
        kinematics::RevoluteJoint joint;
        joint.origin.rotation = random_rotation(rng);
        joint.origin.translation = Eigen::Vector3d(off(rng), off(rng), off(rng));
        joint.axis = random_unit(rng);
        joints.push_back(joint);
    }
    kinematics::Pose mount;
    mount.rotation = random_rotation(rng);
    mount.translation = Eigen::Vector3d(off(rng), off(rng), 0.3 + off(rng));
    return kinematics::ChainModel(std::move(joints), mount, 0.25);
}

inline Eigen::VectorXd random_q(std::mt19937_64& rng, int dof, double range = M_PI) {
    std::uniform_real_distribution<double> a(-range, range);
    Eigen::VectorXd q(dof);
    for (int i = 0; i < dof; ++i) {
        q[i] = a(rng);
    }
    return q;
}

inline Eigen::Vector3d log_so3(const Eigen::Matrix3d& R) {
    const Eigen::AngleAxisd aa(R);
    return aa.angle() * aa.axis();
}

/// Five-point central difference of f at 0.
template <typename F>
auto derivative5(F f, double h) {
    return ((f(-2.0 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2.0 * h)) / (12.0 * h)).eval();
}

} // namespace hrcm::test_support
