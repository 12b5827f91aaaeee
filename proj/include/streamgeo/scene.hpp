#pragma once

#include "streamgeo/io.hpp"
#include "streamgeo/pose.hpp"
#include "streamgeo/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace streamgeo {

// Axis conventions: world and ego frames both use x right, y down, z forward.
// Trajectories are reported in bird's-eye coordinates of the ego frame:
// x forward (= ego z), y left (= -ego x), yaw counter-clockwise seen from above.

struct Box {
    Vec3 center{};
    Vec3 half_extent{};
};

struct Intrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
};

struct CameraRig {
    std::vector<SE3> camera_in_ego; // camera -> ego transform, one per view
    Intrinsics intrinsics;
    int height = 0;
    int width = 0;

    int views() const { return static_cast<int>(camera_in_ego.size()); }
    // V cameras at evenly spaced headings starting straight ahead, 90 degree
    // horizontal field of view, mounted slightly off the ego center.
    static CameraRig ring(int views, int height, int width);
};

enum class TrackKind { Straight, Curve, Weave, Static };

std::string to_string(TrackKind k);
TrackKind track_kind_from_string(const std::string& s);

struct SceneConfig {
    int frames = 16;   // renderable timesteps
    int horizon = 6;   // future waypoints N; the track is frames + horizon long
    int views = 4;
    int height = 48;
    int width = 64;
    int num_boxes = 24;
    TrackKind track = TrackKind::Curve;
    double speed_mps = 6.0;
    double yaw_rate_dps = 6.0; // degrees per second
    double dt = 0.5;           // 2 Hz
    double ego_height = 1.6;   // ground sits at world y = ego_height
    double max_range = 80.0;

    void validate() const;
    void write(KeyValueConfig& kv, const std::string& prefix = "scene.") const;
    static SceneConfig read(const KeyValueConfig& kv, const std::string& prefix = "scene.");
};

struct Scene {
    std::vector<Box> boxes;
    double ground_y = 1.6;
    double max_range = 80.0;
    double dt = 0.5;
    int horizon = 6;
    std::vector<SE3> ego_track; // world poses
    CameraRig rig;

    int frames() const { return static_cast<int>(ego_track.size()) - horizon; }

    KeyValueConfig to_config() const;
    static Scene from_config(const KeyValueConfig& kv);
};

struct EgoStatus {
    std::array<double, 2> velocity{};     // bird's-eye, m/s
    std::array<double, 2> acceleration{}; // bird's-eye, m/s^2
    int command = 1;                      // 0 left, 1 straight, 2 right

    static constexpr int kDims = 7;
    std::array<float, kDims> to_features() const;
};

struct FrameInput {
    Tensor images; // [V, H, W, 3] in [0, 1]
    EgoStatus ego;
    std::int64_t timestep = 0;
};

struct Waypoint {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;

    bool operator==(const Waypoint&) const = default;
};

using Trajectory = std::vector<Waypoint>;

struct GroundTruth {
    Tensor pointmaps;                     // [V, H, W, 3] meters, current ego frame
    std::vector<std::uint8_t> valid_mask; // V*H*W
    SE3 rel_pose;                         // previous ego -> current ego
    Trajectory future_traj;               // N waypoints in current ego frame
};

struct RenderedFrame {
    FrameInput input;
    GroundTruth truth;
};

Scene generate_scene(std::uint64_t seed, const SceneConfig& config);
RenderedFrame render_frame(const Scene& scene, int t);
std::vector<RenderedFrame> render_sequence(const Scene& scene, int frames, int threads = 1);

Trajectory future_in_ego(const std::vector<SE3>& track, int t, int n);

// Bird's-eye (x forward, y left, yaw) of `pose` expressed in ego frame coordinates.
Waypoint waypoint_from_pose(const SE3& pose);

// Nearest ray hit against the scene's boxes and ground, or a negative value.
double cast_ray(const Scene& scene, const Vec3& origin, const Vec3& dir, Vec3* normal = nullptr,
                int* primitive = nullptr);

} // namespace streamgeo
