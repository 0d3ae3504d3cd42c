#include <random>

#include <benchmark/benchmark.h>

#include "hrcm/kinematics.hpp"
#include "hrcm/rcm_control.hpp"
#include "hrcm/simulator.hpp"
#include "hrcm/vision.hpp"

using namespace hrcm;

namespace {

Eigen::VectorXd sample_q() {
    Eigen::VectorXd q(7);
    q << 0.1, 0.6, -0.2, 1.2, 0.1, -0.8, 0.3;
    return q;
}

void BM_ForwardKinematics(benchmark::State& state) {
    const auto chain = kinematics::ChainModel::default_chain();
    const auto q = sample_q();
    for (auto _ : state) {
        benchmark::DoNotOptimize(kinematics::forward_kinematics(chain, q));
    }
}
BENCHMARK(BM_ForwardKinematics);

void BM_GeometricJacobian(benchmark::State& state) {
    const auto chain = kinematics::ChainModel::default_chain();
    const auto q = sample_q();
    const Eigen::Vector3d p = kinematics::forward_kinematics(chain, q).pose_ip1.translation;
    for (auto _ : state) {
        benchmark::DoNotOptimize(kinematics::geometric_jacobian(chain, q, p));
    }
}
BENCHMARK(BM_GeometricJacobian);

void BM_PidStep(benchmark::State& state) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    Eigen::MatrixXd J(7, 8);
    for (int i = 0; i < J.size(); ++i) {
        J.data()[i] = n(rng);
    }
    const auto gains = rcm::PidGains::defaults();
    rcm::PidState pid(7, 1.0 / 300.0);
    const Eigen::VectorXd e = Eigen::VectorXd::Constant(4, 0.01);
    const Eigen::Vector3d e_rcm(1e-4, -2e-4, 0.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(rcm::pid_step(pid, gains, J, e, e_rcm));
    }
}
BENCHMARK(BM_PidStep);

void BM_Ransac(benchmark::State& state) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 640.0);
    Eigen::Matrix3d G;
    G << 0.98, -0.05, 12.0, 0.04, 1.01, -7.0, 1e-5, -2e-5, 1.0;
    std::vector<vision::Correspondence> corr;
    const int n = static_cast<int>(state.range(0));
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector2d t(u(rng), u(rng));
        Eigen::Vector2d c = vision::apply_homography(G, t);
        if (i % 10 < 3) {
            c = Eigen::Vector2d(u(rng), u(rng));
        }
        corr.push_back({t, c});
    }
    vision::RansacParams params;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(vision::estimate_homography_ransac(corr, params, ++seed));
    }
}
BENCHMARK(BM_Ransac)->Arg(100)->Arg(400);

void BM_ServoFrame(benchmark::State& state) {
    const auto config = scenario::ScenarioConfig::defaults(scenario::ScenarioKind::AnyToAny);
    for (auto _ : state) {
        state.PauseTiming();
        auto built = sim::build_graph(config);
        sim::ServoRun run(built.first, built.second, config.servo_target, sim::ServoOptions::from_config(config));
        run.step();  // start vertex: advance only
        state.ResumeTiming();
        benchmark::DoNotOptimize(run.step());
    }
}
BENCHMARK(BM_ServoFrame)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
