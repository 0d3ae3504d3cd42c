#include "hrcm/rcm_control.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "hrcm/errors.hpp"

namespace hrcm::rcm {

double lambda_projection(const Eigen::Vector3d& x_i, const Eigen::Vector3d& x_ip1, const Eigen::Vector3d& x_trocar) {
    const Eigen::Vector3d axis = x_ip1 - x_i;
    const double sq = axis.squaredNorm();
    if (sq == 0.0) {
        throw DegenerateGeometryError("lambda projection: proximal point and camera point coincide");
    }
    return axis.dot(x_trocar - x_i) / sq;
}

Eigen::Vector3d rcm_point(const Eigen::Vector3d& x_i, const Eigen::Vector3d& x_ip1, double lambda) {
    return x_i + lambda * (x_ip1 - x_i);
}

Eigen::MatrixXd rcm_jacobian(const Eigen::MatrixXd& jv_i, const Eigen::MatrixXd& jv_ip1, double lambda,
                             const Eigen::Vector3d& x_i, const Eigen::Vector3d& x_ip1) {
    if (jv_i.rows() != 3 || jv_ip1.rows() != 3 || jv_i.cols() != jv_ip1.cols()) {
        throw ConfigurationError("rcm_jacobian expects two 3xn translational Jacobians of equal width");
    }
    const Eigen::Index n = jv_i.cols();
    Eigen::MatrixXd J(3, n + 1);
    J.leftCols(n) = jv_i + lambda * (jv_ip1 - jv_i);
    J.col(n) = x_ip1 - x_i;
    return J;
}

Eigen::MatrixXd composite_jacobian(const Eigen::MatrixXd& task_jacobian, const Eigen::MatrixXd& rcm_jacobian) {
    if (rcm_jacobian.rows() != 3) {
        throw ConfigurationError("RCM Jacobian must have 3 rows");
    }
    if (task_jacobian.cols() + 1 != rcm_jacobian.cols()) {
        std::ostringstream msg;
        msg << "task Jacobian has " << task_jacobian.cols() << " columns, RCM Jacobian has "
            << rcm_jacobian.cols() << " (expected task + 1)";
        throw ConfigurationError(msg.str());
    }
    const Eigen::Index nt = task_jacobian.rows();
    const Eigen::Index n = task_jacobian.cols();
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nt + 3, n + 1);
    J.topLeftCorner(nt, n) = task_jacobian;
    J.bottomRows(3) = rcm_jacobian;
    return J;
}

Eigen::MatrixXd damped_pseudoinverse(const Eigen::MatrixXd& J, double mu) {
    if (mu < 0.0) {
        throw ConfigurationError("damping must be non-negative");
    }
    if (J.size() == 0) {
        return Eigen::MatrixXd::Zero(J.cols(), J.rows());
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    Eigen::VectorXd inv(s.size());
    for (Eigen::Index k = 0; k < s.size(); ++k) {
        const double den = s[k] * s[k] + mu * mu;
        inv[k] = den > 0.0 ? s[k] / den : 0.0;
    }
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

RcmState RcmState::from_endoscope(const Eigen::Vector3d& x_i, const Eigen::Vector3d& x_ip1,
                                  const Eigen::Vector3d& x_trocar) {
    RcmState s;
    s.x_trocar = x_trocar;
    s.lambda = lambda_projection(x_i, x_ip1, x_trocar);
    s.x_rcm = rcm_point(x_i, x_ip1, s.lambda);
    s.e_rcm_p = x_trocar - s.x_rcm;
    return s;
}

PidGains PidGains::defaults() {
    PidGains g;
    g.kp.resize(7);
    g.ki.resize(7);
    g.kd.resize(7);
    g.kp << 1.2, 1.5, 1.5, 1.8, 1e2, 1e2, 1e2;
    g.ki << 3e-3, 2.5e-3, 2.5e-3, 1.5e-3, 0.0, 0.0, 0.0;
    g.kd << 6e-2, 5e-2, 5e-2, 3e-2, 0.0, 0.0, 0.0;
    return g;
}

void PidGains::validate() const {
    if (kp.size() != ki.size() || kp.size() != kd.size() || kp.size() < 3) {
        throw ConfigurationError("gain diagonals must have equal length of at least 3");
    }
    if ((kp.array() < 0.0).any() || (ki.array() < 0.0).any() || (kd.array() < 0.0).any()) {
        throw ConfigurationError("gain entries must be non-negative");
    }
}

PidState::PidState(int channels, double dt, double integral_clamp)
    : dt_(dt), clamp_(integral_clamp), integral_(Eigen::VectorXd::Zero(channels)) {
    if (!(dt > 0.0)) {
        throw ConfigurationError("PID time step must be positive");
    }
    if (!(integral_clamp >= 0.0)) {
        throw ConfigurationError("integral clamp must be non-negative");
    }
}

void PidState::reset() {
    integral_.setZero();
    previous_.reset();
}

struct PidStepAccess {
    static Eigen::VectorXd& integral(PidState& s) { return s.integral_; }
    static std::optional<Eigen::VectorXd>& previous(PidState& s) { return s.previous_; }
};

PidOutput pid_step(PidState& state, const PidGains& gains, const Eigen::MatrixXd& composite,
                   const Eigen::VectorXd& task_error, const Eigen::Vector3d& rcm_error, double damping) {
    const Eigen::Index m = task_error.size() + 3;
    if (gains.kp.size() != m || gains.ki.size() != m || gains.kd.size() != m) {
        throw ConfigurationError("gain diagonals do not match the stacked error size");
    }
    if (state.channels() != m) {
        throw ConfigurationError("PID state channel count does not match the stacked error size");
    }
    if (composite.rows() != m || composite.cols() < 2) {
        throw ConfigurationError("composite Jacobian rows do not match the stacked error size");
    }
    Eigen::VectorXd e(m);
    e << task_error, rcm_error;
    if (!e.allFinite()) {
        std::ostringstream msg;
        msg << "non-finite controller error input: [" << e.transpose() << "]";
        throw NumericError(msg.str());
    }

    auto& integral = PidStepAccess::integral(state);
    auto& previous = PidStepAccess::previous(state);
    const double dt = state.dt();
    const double bound = state.integral_clamp();

    integral = (integral + e * dt).cwiseMax(-bound).cwiseMin(bound);
    const Eigen::VectorXd derivative = previous ? Eigen::VectorXd((e - *previous) / dt) : Eigen::VectorXd::Zero(m);
    previous = e;

    const Eigen::VectorXd command = gains.kp.cwiseProduct(e) + gains.ki.cwiseProduct(integral) +
                                    gains.kd.cwiseProduct(derivative);
    const Eigen::VectorXd x = damped_pseudoinverse(composite, damping) * command;

    PidOutput out;
    out.q_dot = x.head(x.size() - 1);
    out.lambda_dot = x[x.size() - 1];
    return out;
}

} // namespace hrcm::rcm
