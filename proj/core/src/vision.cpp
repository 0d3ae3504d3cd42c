#include "hrcm/vision.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include <Eigen/Dense>

#include "hrcm/errors.hpp"

namespace hrcm::vision {

namespace {

struct Normalizer {
    Eigen::Matrix3d T = Eigen::Matrix3d::Identity();
};

// Similarity moving the centroid to the origin with mean distance sqrt(2).
template <typename Get>
Normalizer hartley(std::span<const Correspondence> m, Get get) {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    for (const auto& x : m) {
        c += get(x);
    }
    c /= static_cast<double>(m.size());
    double mean = 0.0;
    for (const auto& x : m) {
        mean += (get(x) - c).norm();
    }
    mean /= static_cast<double>(m.size());
    Normalizer n;
    const double s = mean > 0.0 ? std::sqrt(2.0) / mean : 1.0;
    n.T << s, 0.0, -s * c.x(), 0.0, s, -s * c.y(), 0.0, 0.0, 1.0;
    return n;
}

Eigen::Vector2d xform(const Eigen::Matrix3d& T, const Eigen::Vector2d& p) {
    const Eigen::Vector3d h = T * p.homogeneous();
    return h.hnormalized();
}

bool nearly_collinear(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    const Eigen::Vector2d u = b - a;
    const Eigen::Vector2d v = c - a;
    const double cross = std::abs(u.x() * v.y() - u.y() * v.x());
    const double scale = std::max({u.squaredNorm(), v.squaredNorm(), (c - b).squaredNorm()});
    return scale == 0.0 || cross <= 1e-3 * scale;
}

bool degenerate_sample(std::span<const Correspondence> m, const std::array<std::size_t, 4>& idx) {
    static constexpr int kTriples[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
    for (const auto& t : kTriples) {
        const auto& a = m[idx[t[0]]];
        const auto& b = m[idx[t[1]]];
        const auto& c = m[idx[t[2]]];
        if (nearly_collinear(a.target, b.target, c.target) || nearly_collinear(a.current, b.current, c.current)) {
            return true;
        }
    }
    return false;
}

std::vector<Correspondence> gather(std::span<const Correspondence> m, const std::vector<bool>& mask) {
    std::vector<Correspondence> out;
    for (std::size_t k = 0; k < m.size(); ++k) {
        if (mask[k]) {
            out.push_back(m[k]);
        }
    }
    return out;
}

int score(std::span<const Correspondence> m, const Eigen::Matrix3d& G, double threshold, std::vector<bool>& mask,
          double& total_error) {
    int count = 0;
    total_error = 0.0;
    mask.assign(m.size(), false);
    for (std::size_t k = 0; k < m.size(); ++k) {
        const double e = transfer_error(G, m[k]);
        if (e <= threshold) {
            mask[k] = true;
            ++count;
            total_error += e;
        }
    }
    return count;
}

} // namespace

PlanarScene PlanarScene::generate(const Pose& plane_pose, int count, double half_extent, std::uint64_t seed) {
    if (count < 0 || !(half_extent > 0.0)) {
        throw ConfigurationError("scene needs a non-negative feature count and a positive extent");
    }
    PlanarScene scene;
    scene.plane_pose = plane_pose;
    scene.seed = seed;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-half_extent, half_extent);
    scene.features.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double x = u(rng);
        const double y = u(rng);
        scene.features.push_back({i, Eigen::Vector2d(x, y)});
    }
    return scene;
}

Eigen::Vector3d PlanarScene::world_point(const Feature& f) const {
    return plane_pose.transform(Eigen::Vector3d(f.position.x(), f.position.y(), 0.0));
}

void PlanarScene::validate() const {
    if (!plane_pose.is_orthonormal(1e-9)) {
        throw ConfigurationError("scene plane pose rotation is not orthonormal");
    }
    std::set<int> ids;
    for (const auto& f : features) {
        if (!ids.insert(f.id).second) {
            throw ConfigurationError("duplicate scene feature id " + std::to_string(f.id));
        }
        if (!f.position.allFinite()) {
            throw ConfigurationError("scene feature " + std::to_string(f.id) + " is not finite");
        }
    }
}

bool FovMask::contains(const Eigen::Vector2d& p) const {
    if (!p.allFinite() || (p - center).norm() > radius) {
        return false;
    }
    if (rect_origin && rect_size) {
        const Eigen::Vector2d rel = p - *rect_origin;
        return rel.x() >= 0.0 && rel.y() >= 0.0 && rel.x() <= rect_size->x() && rel.y() <= rect_size->y();
    }
    return true;
}

Eigen::Vector2d distort(const Eigen::Vector2d& p, const Distortion& d) {
    const double k1 = d[0], k2 = d[1], p1 = d[2], p2 = d[3], k3 = d[4];
    const double x = p.x();
    const double y = p.y();
    const double r2 = x * x + y * y;
    const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
    return {x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
            y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y};
}

Eigen::Vector2d undistort(const Eigen::Vector2d& p, const Distortion& d, int max_iterations, double tolerance) {
    const double k1 = d[0], k2 = d[1], p1 = d[2], p2 = d[3], k3 = d[4];
    Eigen::Vector2d u = p;
    double residual = (distort(u, d) - p).norm();
    for (int it = 0; it < max_iterations && residual > tolerance; ++it) {
        const double x = u.x();
        const double y = u.y();
        const double r2 = x * x + y * y;
        const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
        const Eigen::Vector2d tangential(2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
                                         p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y);
        u = (p - tangential) / radial;
        residual = (distort(u, d) - p).norm();
    }
    if (!(residual <= tolerance)) {
        std::ostringstream msg;
        msg << "undistort did not converge for (" << p.x() << ", " << p.y() << "): residual " << residual
            << " after " << max_iterations << " iterations";
        throw NumericError(msg.str());
    }
    return u;
}

Eigen::Vector2d undistort_pixel(const Eigen::Vector2d& pixel, const CameraIntrinsics& K) {
    const Eigen::Vector2d m((pixel.x() - K.cx) / K.fx, (pixel.y() - K.cy) / K.fy);
    const Eigen::Vector2d u = undistort(m, K.distortion);
    return {K.fx * u.x() + K.cx, K.fy * u.y() + K.cy};
}

std::vector<FeatureObservation> undistort_observations(std::span<const FeatureObservation> obs,
                                                       const CameraIntrinsics& K) {
    std::vector<FeatureObservation> out(obs.begin(), obs.end());
    for (auto& o : out) {
        if (o.inside_fov) {
            o.pixel = undistort_pixel(o.pixel, K);
        }
    }
    return out;
}

std::vector<FeatureObservation> project_scene(const PlanarScene& scene, const Pose& camera,
                                              const CameraIntrinsics& K, const FovMask& mask) {
    const Pose world_to_camera = camera.inverse();
    std::vector<FeatureObservation> out;
    out.reserve(scene.features.size());
    bool any_in_front = false;
    for (const auto& f : scene.features) {
        FeatureObservation o;
        o.id = f.id;
        const Eigen::Vector3d X = world_to_camera.transform(scene.world_point(f));
        if (X.z() > 0.0) {
            any_in_front = true;
            const Eigen::Vector2d m = distort(Eigen::Vector2d(X.x() / X.z(), X.y() / X.z()), K.distortion);
            o.pixel = Eigen::Vector2d(K.fx * m.x() + K.cx, K.fy * m.y() + K.cy);
            o.inside_fov = mask.contains(o.pixel);
        }
        out.push_back(o);
    }
    if (!any_in_front && !scene.features.empty()) {
        throw DegenerateGeometryError("no scene feature lies in front of the camera");
    }
    return out;
}

CameraIntrinsics crop_rescale_intrinsics(const CameraIntrinsics& K, const Eigen::Vector2d& crop_origin, double scale) {
    if (!(scale > 0.0)) {
        throw ConfigurationError("crop rescale factor must be positive");
    }
    CameraIntrinsics out = K;
    out.fx = scale * K.fx;
    out.fy = scale * K.fy;
    out.cx = scale * (K.cx - crop_origin.x());
    out.cy = scale * (K.cy - crop_origin.y());
    return out;
}

EndoscopeCamera::EndoscopeCamera(CameraIntrinsics sensor, Eigen::Vector2d circle_center, double circle_radius,
                                 double crop_aspect, double output_width)
    : sensor_(std::move(sensor)), circle_center_(std::move(circle_center)), circle_radius_(circle_radius) {
    sensor_.validate();
    if (!(circle_radius > 0.0) || !(crop_aspect > 0.0) || !(output_width > 0.0)) {
        throw ConfigurationError("endoscope circle radius, crop aspect and output width must be positive");
    }
    // Largest w x h rectangle with w / h = aspect inscribed in the circle.
    const double diag = 2.0 * circle_radius;
    const double h = diag / std::sqrt(1.0 + crop_aspect * crop_aspect);
    const double w = crop_aspect * h;
    crop_size_ = Eigen::Vector2d(w, h);
    crop_origin_ = circle_center_ - 0.5 * crop_size_;
    scale_ = output_width / w;
    cropped_ = crop_rescale_intrinsics(sensor_, crop_origin_, scale_);
}

FovMask EndoscopeCamera::output_mask() const {
    FovMask m;
    m.center = scale_ * (circle_center_ - crop_origin_);
    m.radius = scale_ * circle_radius_;
    m.rect_origin = Eigen::Vector2d::Zero();
    m.rect_size = image_size();
    return m;
}

std::vector<FeatureObservation> EndoscopeCamera::render(const PlanarScene& scene, const Pose& camera) const {
    return project_scene(scene, camera, cropped_, output_mask());
}

void Corruption::validate() const {
    auto in_unit = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (!in_unit(outlier_rate) || !in_unit(dropout_rate)) {
        throw ConfigurationError("outlier and dropout rates must lie in [0, 1]");
    }
    if (!(noise_px >= 0.0)) {
        throw ConfigurationError("pixel noise must be non-negative");
    }
    if (!(image_size.x() > 0.0) || !(image_size.y() > 0.0)) {
        throw ConfigurationError("image size must be positive");
    }
}

std::vector<Correspondence> MatchSet::correspondences() const {
    std::vector<Correspondence> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        out.push_back({p.target, p.current});
    }
    return out;
}

std::vector<bool> MatchSet::ground_truth_inliers() const {
    std::vector<bool> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        out.push_back(!p.synthetic_outlier);
    }
    return out;
}

MatchSet match_views(std::span<const FeatureObservation> current, std::span<const FeatureObservation> target,
                     const Corruption& corruption, std::uint64_t seed) {
    corruption.validate();
    std::unordered_map<int, const FeatureObservation*> by_id;
    for (const auto& c : current) {
        if (c.inside_fov) {
            by_id.emplace(c.id, &c);
        }
    }
    std::vector<Match> pairs;
    for (const auto& t : target) {
        if (!t.inside_fov) {
            continue;
        }
        const auto it = by_id.find(t.id);
        if (it != by_id.end()) {
            pairs.push_back({t.id, t.pixel, it->second->pixel, false});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Match& a, const Match& b) { return a.id < b.id; });

    std::mt19937_64 rng(seed);
    if (corruption.dropout_rate > 0.0 && !pairs.empty()) {
        const auto drop = static_cast<std::size_t>(std::lround(corruption.dropout_rate * static_cast<double>(pairs.size())));
        std::vector<std::size_t> order(pairs.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<bool> keep(pairs.size(), true);
        for (std::size_t k = 0; k < drop; ++k) {
            keep[order[k]] = false;
        }
        std::vector<Match> kept;
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            if (keep[k]) {
                kept.push_back(pairs[k]);
            }
        }
        pairs = std::move(kept);
    }
    if (corruption.outlier_rate > 0.0 && !pairs.empty()) {
        const auto n_out =
            static_cast<std::size_t>(std::lround(corruption.outlier_rate * static_cast<double>(pairs.size())));
        std::vector<std::size_t> order(pairs.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::uniform_real_distribution<double> ux(0.0, corruption.image_size.x());
        std::uniform_real_distribution<double> uy(0.0, corruption.image_size.y());
        for (std::size_t k = 0; k < n_out; ++k) {
            auto& p = pairs[order[k]];
            const double x = ux(rng);
            const double y = uy(rng);
            p.current = Eigen::Vector2d(x, y);
            p.synthetic_outlier = true;
        }
    }
    if (corruption.noise_px > 0.0) {
        std::normal_distribution<double> n(0.0, corruption.noise_px);
        for (auto& p : pairs) {
            const double dx = n(rng);
            const double dy = n(rng);
            p.current += Eigen::Vector2d(dx, dy);
        }
    }
    if (pairs.size() < 4) {
        throw InsufficientFeaturesError("only " + std::to_string(pairs.size()) +
                                        " matches between views (need at least 4)");
    }
    MatchSet out;
    out.pairs = std::move(pairs);
    return out;
}

Eigen::Vector2d apply_homography(const Eigen::Matrix3d& G, const Eigen::Vector2d& p) {
    return (G * p.homogeneous()).hnormalized();
}

double transfer_error(const Eigen::Matrix3d& G, const Correspondence& c) {
    const Eigen::Vector3d h = G * c.target.homogeneous();
    if (std::abs(h.z()) < 1e-300) {
        return std::numeric_limits<double>::infinity();
    }
    return (h.hnormalized() - c.current).norm();
}

Homography estimate_homography_dlt(std::span<const Correspondence> matches) {
    const std::size_t n = matches.size();
    if (n < 4) {
        throw EstimationError("DLT needs at least 4 correspondences, got " + std::to_string(n));
    }
    const Normalizer nt = hartley(matches, [](const Correspondence& c) -> const Eigen::Vector2d& { return c.target; });
    const Normalizer nc =
        hartley(matches, [](const Correspondence& c) -> const Eigen::Vector2d& { return c.current; });

    Eigen::MatrixXd A(2 * static_cast<Eigen::Index>(n), 9);
    for (std::size_t k = 0; k < n; ++k) {
        const Eigen::Vector2d t = xform(nt.T, matches[k].target);
        const Eigen::Vector2d c = xform(nc.T, matches[k].current);
        const double x = t.x(), y = t.y(), u = c.x(), v = c.y();
        const auto r = 2 * static_cast<Eigen::Index>(k);
        A.row(r) << 0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v;
        A.row(r + 1) << x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u;
    }
    if (!A.allFinite()) {
        throw EstimationError("non-finite correspondence coordinates");
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
    const Eigen::VectorXd& s = svd.singularValues();
    // A 9-column design matrix needs rank 8 for a unique null vector.
    if (s.size() < 8 || s[7] <= 1e-10 * s[0]) {
        throw EstimationError("degenerate correspondence configuration (rank-deficient design matrix)");
    }
    const Eigen::VectorXd h = svd.matrixV().col(8);
    Eigen::Matrix3d Hn;
    Hn << h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8];
    Homography G;
    G.space = homography::Space::Pixel;
    try {
        G.matrix = homography::normalize_homography(nc.T.inverse() * Hn * nt.T);
    } catch (const DegenerateGeometryError& e) {
        throw EstimationError(std::string("DLT produced a singular homography: ") + e.what());
    }
    return G;
}

void RansacParams::validate() const {
    if (!(threshold_px > 0.0)) {
        throw ConfigurationError("RANSAC threshold must be positive");
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
        throw ConfigurationError("RANSAC confidence must lie in (0, 1)");
    }
    if (max_iterations < 1) {
        throw ConfigurationError("RANSAC needs at least one iteration");
    }
}

RansacResult estimate_homography_ransac(std::span<const Correspondence> matches, const RansacParams& params,
                                        std::uint64_t seed) {
    params.validate();
    const std::size_t n = matches.size();
    if (n < 4) {
        throw EstimationError("RANSAC needs at least 4 correspondences, got " + std::to_string(n));
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);

    int best_count = 0;
    double best_error = std::numeric_limits<double>::infinity();
    std::vector<bool> best_mask;
    Eigen::Matrix3d best_G = Eigen::Matrix3d::Identity();
    std::vector<bool> mask;

    long needed = params.max_iterations;
    int it = 0;
    for (; it < needed && it < params.max_iterations; ++it) {
        std::array<std::size_t, 4> idx{};
        for (std::size_t k = 0; k < 4; ++k) {
            bool fresh = false;
            while (!fresh) {
                idx[k] = pick(rng);
                fresh = std::find(idx.begin(), idx.begin() + static_cast<long>(k), idx[k]) ==
                        idx.begin() + static_cast<long>(k);
            }
        }
        if (degenerate_sample(matches, idx)) {
            continue;
        }
        const std::array<Correspondence, 4> sample{matches[idx[0]], matches[idx[1]], matches[idx[2]],
                                                   matches[idx[3]]};
        Eigen::Matrix3d G;
        try {
            G = estimate_homography_dlt(sample).matrix;
        } catch (const EstimationError&) {
            continue;
        }
        double err = 0.0;
        const int count = score(matches, G, params.threshold_px, mask, err);
        if (count > best_count || (count == best_count && count > 0 && err < best_error)) {
            best_count = count;
            best_error = err;
            best_mask = mask;
            best_G = G;
            const double w = static_cast<double>(count) / static_cast<double>(n);
            const double p_good = std::pow(w, 4.0);
            if (p_good >= 1.0 - 1e-12) {
                needed = it + 1;
            } else if (p_good > 0.0) {
                const double k = std::log(1.0 - params.confidence) / std::log(1.0 - p_good);
                needed = std::min<long>(params.max_iterations, static_cast<long>(std::ceil(k)));
            }
        }
    }
    if (best_count < 4) {
        throw EstimationError("RANSAC found no model with at least 4 inliers after " + std::to_string(it) +
                              " iterations");
    }

    // Refit on the consensus set until it stops growing.
    RansacResult result;
    result.G.space = homography::Space::Pixel;
    result.G.matrix = best_G;
    result.inliers = best_mask;
    result.inlier_count = best_count;
    result.iterations = it;
    for (int round = 0; round < 5; ++round) {
        const auto inliers = gather(matches, result.inliers);
        Eigen::Matrix3d G;
        try {
            G = estimate_homography_dlt(inliers).matrix;
        } catch (const EstimationError&) {
            break;
        }
        double err = 0.0;
        const int count = score(matches, G, params.threshold_px, mask, err);
        if (count < result.inlier_count) {
            break;
        }
        const bool same = mask == result.inliers;
        result.G.matrix = G;
        result.inliers = mask;
        result.inlier_count = count;
        if (same) {
            break;
        }
    }
    return result;
}

double mean_pairwise_distance(std::span<const Eigen::Vector2d> target, std::span<const Eigen::Vector2d> current,
                              const std::optional<Eigen::Matrix3d>& G) {
    if (target.size() != current.size()) {
        throw ConfigurationError("mean pairwise distance needs equally sized point sets");
    }
    if (target.empty()) {
        throw ConfigurationError("mean pairwise distance is undefined for empty point sets");
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < target.size(); ++k) {
        const Eigen::Vector2d t = G ? apply_homography(*G, target[k]) : target[k];
        sum += (t - current[k]).norm();
    }
    return sum / static_cast<double>(target.size());
}

double mean_pairwise_distance(std::span<const Correspondence> matches, const std::vector<bool>* mask,
                              const std::optional<Eigen::Matrix3d>& G) {
    if (mask != nullptr && mask->size() != matches.size()) {
        throw ConfigurationError("mask size does not match the correspondence count");
    }
    std::vector<Eigen::Vector2d> t;
    std::vector<Eigen::Vector2d> c;
    for (std::size_t k = 0; k < matches.size(); ++k) {
        if (mask == nullptr || (*mask)[k]) {
            t.push_back(matches[k].target);
            c.push_back(matches[k].current);
        }
    }
    return mean_pairwise_distance(t, c, G);
}

Eigen::Matrix3d plane_induced_homography(const Pose& target_camera, const Pose& current_camera,
                                         const Pose& plane_pose, const CameraIntrinsics& K_target,
                                         const CameraIntrinsics& K_current) {
    const Eigen::Matrix3d R = current_camera.rotation.transpose() * target_camera.rotation;
    const Eigen::Vector3d t =
        current_camera.rotation.transpose() * (target_camera.translation - current_camera.translation);
    const Eigen::Vector3d n_world = plane_pose.z_axis();
    const Eigen::Vector3d n_star = target_camera.rotation.transpose() * n_world;
    const double d_star = n_world.dot(plane_pose.translation - target_camera.translation);
    if (std::abs(d_star) < 1e-12) {
        throw DegenerateGeometryError("target camera lies on the scene plane");
    }
    const Eigen::Matrix3d H = R + t * n_star.transpose() / d_star;
    return K_current.matrix() * H * K_target.inverse_matrix();
}

} // namespace hrcm::vision
