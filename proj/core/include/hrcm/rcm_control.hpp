#pragma once

#include <optional>

#include <Eigen/Core>

namespace hrcm::rcm {

/// SVD damping used for the composite Jacobian pseudo-inverse.
inline constexpr double kDefaultDamping = 5e-4;
/// Symmetric anti-windup bound on every integral channel.
inline constexpr double kDefaultIntegralClamp = 10.0;

/// Entry-depth parameter that places the trocar's orthogonal projection on the
/// endoscope line: lambda = (x_ip1 - x_i)^T (x_trocar - x_i) / |x_ip1 - x_i|^2.
/// Not clamped. Throws DegenerateGeometryError when x_i == x_ip1.
double lambda_projection(const Eigen::Vector3d& x_i, const Eigen::Vector3d& x_ip1, const Eigen::Vector3d& x_trocar);

/// x_i + lambda (x_ip1 - x_i)
Eigen::Vector3d rcm_point(const Eigen::Vector3d& x_i, const Eigen::Vector3d& x_ip1, double lambda);

/// 3x(n+1) Jacobian of the RCM point w.r.t. [q; lambda].
Eigen::MatrixXd rcm_jacobian(const Eigen::MatrixXd& jv_i, const Eigen::MatrixXd& jv_ip1, double lambda,
                             const Eigen::Vector3d& x_i, const Eigen::Vector3d& x_ip1);

/// [[J_t, 0]; [J_rcm]], (n_t+3)x(n+1).
Eigen::MatrixXd composite_jacobian(const Eigen::MatrixXd& task_jacobian, const Eigen::MatrixXd& rcm_jacobian);

/// V diag(s / (s^2 + mu^2)) U^T from the SVD of J.
Eigen::MatrixXd damped_pseudoinverse(const Eigen::MatrixXd& J, double mu);

struct RcmState {
    Eigen::Vector3d x_trocar = Eigen::Vector3d::Zero();
    double lambda = 0.0;
    Eigen::Vector3d x_rcm = Eigen::Vector3d::Zero();
    Eigen::Vector3d e_rcm_p = Eigen::Vector3d::Zero();  // x_trocar - x_rcm

    /// Re-projects the trocar onto the current endoscope line.
    static RcmState from_endoscope(const Eigen::Vector3d& x_i, const Eigen::Vector3d& x_ip1,
                                   const Eigen::Vector3d& x_trocar);
};

/// Diagonals of the gain matrices, task channels first then the three RCM channels.
struct PidGains {
    Eigen::VectorXd kp;
    Eigen::VectorXd ki;
    Eigen::VectorXd kd;

    /// Gains that worked on the physical LBR Med setup (4 task + 3 RCM channels).
    static PidGains defaults();

    int channels() const { return static_cast<int>(kp.size()); }
    /// Throws ConfigurationError on size mismatch or negative entries.
    void validate() const;
};

class PidState {
public:
    PidState(int channels, double dt, double integral_clamp = kDefaultIntegralClamp);

    int channels() const { return static_cast<int>(integral_.size()); }
    double dt() const { return dt_; }
    double integral_clamp() const { return clamp_; }
    const Eigen::VectorXd& integral() const { return integral_; }
    const std::optional<Eigen::VectorXd>& previous_error() const { return previous_; }

    void reset();

private:
    friend struct PidStepAccess;

    double dt_;
    double clamp_;
    Eigen::VectorXd integral_;
    std::optional<Eigen::VectorXd> previous_;
};

struct PidOutput {
    Eigen::VectorXd q_dot;
    double lambda_dot = 0.0;
};

/// One control cycle: stacks [e_t; e_rcm], updates the clamped integral and the
/// backward-difference derivative (zero on the first call), and maps
/// Kp e + Ki int(e) + Kd de/dt through the damped pseudo-inverse of J_cp.
PidOutput pid_step(PidState& state, const PidGains& gains, const Eigen::MatrixXd& composite,
                   const Eigen::VectorXd& task_error, const Eigen::Vector3d& rcm_error,
                   double damping = kDefaultDamping);

} // namespace hrcm::rcm
