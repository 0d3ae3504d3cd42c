#include "hrcm/view_graph.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <queue>

#include <nlohmann/json.hpp>

#include "hrcm/errors.hpp"
#include "hrcm/serialization.hpp"

namespace hrcm::graph {

namespace {
constexpr const char* kFormat = "hrcm-view-graph";
constexpr int kVersion = 1;
} // namespace

std::size_t ViewVertex::visible_features() const {
    return static_cast<std::size_t>(
        std::count_if(snapshot.begin(), snapshot.end(), [](const FeatureObservation& o) { return o.inside_fov; }));
}

const ViewVertex& ViewGraph::vertex(int id) const {
    if (!contains(id)) {
        throw ConfigurationError("unknown view vertex " + std::to_string(id));
    }
    return vertices_[static_cast<std::size_t>(id)];
}

std::vector<int> ViewGraph::neighbors(int id) const {
    std::vector<int> out;
    for (const auto& [a, b] : edges_) {
        if (a == id) {
            out.push_back(b);
        } else if (b == id) {
            out.push_back(a);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

void ViewGraph::set_current(int id) {
    vertex(id);
    current_ = id;
}

void ViewGraph::connect(int a, int b) {
    vertex(a);
    vertex(b);
    if (a == b) {
        throw ConfigurationError("self-loop edges are not allowed");
    }
    edges_.insert({std::min(a, b), std::max(a, b)});
}

int ViewGraph::capture(std::vector<FeatureObservation> snapshot, const CameraIntrinsics& intrinsics, double timestamp,
                       std::optional<kinematics::Pose> eval_camera_pose) {
    ViewVertex v;
    v.id = static_cast<int>(vertices_.size());
    v.snapshot = std::move(snapshot);
    v.intrinsics = intrinsics;
    v.timestamp = timestamp;
    v.eval_camera_pose = std::move(eval_camera_pose);
    if (v.visible_features() < kMinSnapshotFeatures) {
        throw InsufficientFeaturesError("snapshot has " + std::to_string(v.visible_features()) +
                                        " visible features (need at least 4)");
    }
    const int id = v.id;
    vertices_.push_back(std::move(v));
    if (current_) {
        edges_.insert({std::min(*current_, id), std::max(*current_, id)});
    }
    current_ = id;
    return id;
}

std::vector<int> ViewGraph::shortest_path(int from, int to) const {
    vertex(from);
    vertex(to);
    // Unit-cost Dijkstra from the target, then a greedy walk from the source
    // that always steps to the smallest-id neighbor one hop closer.
    const std::size_t n = vertices_.size();
    constexpr int kInf = std::numeric_limits<int>::max();
    std::vector<int> dist(n, kInf);
    std::vector<std::vector<int>> adj(n);
    for (const auto& [a, b] : edges_) {
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    }
    for (auto& list : adj) {
        std::sort(list.begin(), list.end());
    }
    using Item = std::pair<int, int>;  // (distance, vertex)
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[static_cast<std::size_t>(to)] = 0;
    queue.push({0, to});
    while (!queue.empty()) {
        const auto [d, v] = queue.top();
        queue.pop();
        if (d > dist[static_cast<std::size_t>(v)]) {
            continue;
        }
        for (int w : adj[static_cast<std::size_t>(v)]) {
            const int nd = d + 1;
            if (nd < dist[static_cast<std::size_t>(w)]) {
                dist[static_cast<std::size_t>(w)] = nd;
                queue.push({nd, w});
            }
        }
    }
    if (dist[static_cast<std::size_t>(from)] == kInf) {
        throw NoPathError("no path from view " + std::to_string(from) + " to view " + std::to_string(to));
    }
    std::vector<int> path{from};
    int v = from;
    while (v != to) {
        const int want = dist[static_cast<std::size_t>(v)] - 1;
        for (int w : adj[static_cast<std::size_t>(v)]) {
            if (dist[static_cast<std::size_t>(w)] == want) {
                v = w;
                break;
            }
        }
        path.push_back(v);
    }
    return path;
}

nlohmann::json ViewGraph::to_json() const {
    nlohmann::json verts = nlohmann::json::array();
    for (const auto& v : vertices_) {
        nlohmann::json jv = {{"id", v.id},
                             {"timestamp", v.timestamp},
                             {"intrinsics", io::intrinsics_to_json(v.intrinsics)},
                             {"snapshot", io::observations_to_json(v.snapshot)}};
        if (v.eval_camera_pose) {
            jv["eval_camera_pose"] = io::pose_to_json(*v.eval_camera_pose);
        }
        verts.push_back(jv);
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& [a, b] : edges_) {
        edges.push_back({a, b});
    }
    nlohmann::json out = {{"format", kFormat}, {"version", kVersion}, {"vertices", verts}, {"edges", edges}};
    out["current"] = current_ ? nlohmann::json(*current_) : nlohmann::json(nullptr);
    return out;
}

ViewGraph ViewGraph::from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", std::string{}) != kFormat || j.value("version", 0) != kVersion) {
            throw ConfigurationError("not an hrcm-view-graph v1 document");
        }
        ViewGraph g;
        for (const auto& jv : j.at("vertices")) {
            ViewVertex v;
            v.id = jv.at("id").get<int>();
            if (v.id != static_cast<int>(g.vertices_.size())) {
                throw ConfigurationError("vertex ids must be consecutive from 0");
            }
            v.timestamp = jv.value("timestamp", 0.0);
            v.intrinsics = io::intrinsics_from_json(jv.at("intrinsics"));
            v.snapshot = io::observations_from_json(jv.at("snapshot"));
            if (jv.contains("eval_camera_pose")) {
                v.eval_camera_pose = io::pose_from_json(jv.at("eval_camera_pose"));
            }
            if (v.visible_features() < kMinSnapshotFeatures) {
                throw InsufficientFeaturesError("vertex " + std::to_string(v.id) + " has too few features");
            }
            g.vertices_.push_back(std::move(v));
        }
        for (const auto& e : j.at("edges")) {
            g.connect(e.at(0).get<int>(), e.at(1).get<int>());
        }
        if (j.contains("current") && !j.at("current").is_null()) {
            g.set_current(j.at("current").get<int>());
        }
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError(std::string("invalid view graph document: ") + e.what());
    }
}

void ViewGraph::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw ConfigurationError("cannot write view graph to " + path.string());
    }
    out << to_json().dump(2) << '\n';
}

ViewGraph ViewGraph::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigurationError("cannot open view graph " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigurationError("view graph " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

TargetEstimate target_homography(std::span<const FeatureObservation> current_snapshot,
                                 const CameraIntrinsics& current_intrinsics, const ViewVertex& next_vertex,
                                 const vision::Corruption& corruption, const vision::RansacParams& ransac,
                                 std::uint64_t seed) {
    const auto current = vision::undistort_observations(current_snapshot, current_intrinsics);
    const auto target = vision::undistort_observations(next_vertex.snapshot, next_vertex.intrinsics);
    TargetEstimate out;
    out.matches = vision::match_views(current, target, corruption, seed);
    const auto corr = out.matches.correspondences();
    // Distinct stream from the matcher's corruption draws.
    out.ransac = vision::estimate_homography_ransac(corr, ransac, seed ^ 0x9e3779b97f4a7c15ULL);
    return out;
}

} // namespace hrcm::graph
