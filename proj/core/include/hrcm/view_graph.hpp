#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "hrcm/vision.hpp"

namespace hrcm::graph {

using homography::CameraIntrinsics;
using vision::FeatureObservation;

/// A captured desired view. `eval_camera_pose` is recorded for offline
/// evaluation only and is never read by the servo controller.
struct ViewVertex {
    int id = 0;
    std::vector<FeatureObservation> snapshot;
    CameraIntrinsics intrinsics;
    double timestamp = 0.0;
    std::optional<kinematics::Pose> eval_camera_pose;

    std::size_t visible_features() const;
};

/// Undirected graph of captured views. Every capture is linked to the vertex
/// that was current at capture time, so the graph stays connected.
class ViewGraph {
public:
    static constexpr std::size_t kMinSnapshotFeatures = 4;

    bool empty() const { return vertices_.empty(); }
    std::size_t size() const { return vertices_.size(); }
    const std::vector<ViewVertex>& vertices() const { return vertices_; }
    const ViewVertex& vertex(int id) const;
    bool contains(int id) const { return id >= 0 && static_cast<std::size_t>(id) < vertices_.size(); }

    /// Sorted (a < b) edge list.
    const std::set<std::pair<int, int>>& edges() const { return edges_; }
    std::vector<int> neighbors(int id) const;

    std::optional<int> current() const { return current_; }
    void set_current(int id);

    /// Adds a vertex linked to the current one and makes it current.
    /// Throws InsufficientFeaturesError when fewer than 4 features are visible.
    int capture(std::vector<FeatureObservation> snapshot, const CameraIntrinsics& intrinsics, double timestamp,
                std::optional<kinematics::Pose> eval_camera_pose = std::nullopt);

    /// Min-hop path from `from` to `to`, endpoints included. Among equally
    /// short paths the one with the smallest next-vertex id at each hop wins.
    /// Throws NoPathError when `to` is unreachable, ConfigurationError for unknown ids.
    std::vector<int> shortest_path(int from, int to) const;

    nlohmann::json to_json() const;
    static ViewGraph from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static ViewGraph load(const std::filesystem::path& path);

    /// Adds an edge between existing vertices (used by import).
    void connect(int a, int b);

private:
    std::vector<ViewVertex> vertices_;
    std::set<std::pair<int, int>> edges_;
    std::optional<int> current_;
};

inline int capture_view(ViewGraph& graph, std::vector<FeatureObservation> snapshot, const CameraIntrinsics& K,
                        double timestamp = 0.0) {
    return graph.capture(std::move(snapshot), K, timestamp);
}

inline std::vector<int> shortest_path(const ViewGraph& graph, int from, int to) {
    return graph.shortest_path(from, to);
}

struct TargetEstimate {
    vision::MatchSet matches;
    vision::RansacResult ransac;
};

/// Homography G mapping the vertex's (undistorted) features onto the current
/// (undistorted) view. Inputs are raw observations; both sides are undistorted
/// with their own intrinsics before matching.
TargetEstimate target_homography(std::span<const FeatureObservation> current_snapshot,
                                 const CameraIntrinsics& current_intrinsics, const ViewVertex& next_vertex,
                                 const vision::Corruption& corruption, const vision::RansacParams& ransac,
                                 std::uint64_t seed);

} // namespace hrcm::graph
