#include "streamgeo/scene.hpp"

#include "streamgeo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <thread>

namespace streamgeo {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double dot(const Vec3& a, const Vec3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

double length(const Vec3& a) {
    return std::sqrt(dot(a, a));
}

// Slab test. Returns entry distance (or exit distance if the origin is inside).
double intersect_box(const Box& box, const Vec3& o, const Vec3& d, Vec3& normal) {
    double tmin = -std::numeric_limits<double>::infinity();
    double tmax = std::numeric_limits<double>::infinity();
    int axis_min = -1;
    int axis_max = -1;
    for (int a = 0; a < 3; ++a) {
        const double lo = box.center[a] - box.half_extent[a];
        const double hi = box.center[a] + box.half_extent[a];
        if (d[a] == 0.0) {
            if (o[a] < lo || o[a] > hi) {
                return -1.0;
            }
            continue;
        }
        double t0 = (lo - o[a]) / d[a];
        double t1 = (hi - o[a]) / d[a];
        if (t0 > t1) {
            std::swap(t0, t1);
        }
        if (t0 > tmin) {
            tmin = t0;
            axis_min = a;
        }
        if (t1 < tmax) {
            tmax = t1;
            axis_max = a;
        }
    }
    if (tmax < tmin || tmax <= 0.0) {
        return -1.0;
    }
    const bool inside = tmin <= 0.0;
    const double t = inside ? tmax : tmin;
    const int axis = inside ? axis_max : axis_min;
    normal = {0.0, 0.0, 0.0};
    if (axis >= 0) {
        normal[axis] = d[axis] > 0.0 ? -1.0 : 1.0;
    }
    return t;
}

double track_yaw_rate(const SceneConfig& c, int step) {
    switch (c.track) {
    case TrackKind::Straight:
    case TrackKind::Static:
        return 0.0;
    case TrackKind::Curve:
        return c.yaw_rate_dps * kDeg;
    case TrackKind::Weave:
        return c.yaw_rate_dps * kDeg * std::sin(2.0 * std::numbers::pi * step / 12.0);
    }
    return 0.0;
}

std::array<double, 2> bev_velocity(const std::vector<SE3>& track, int t, double dt) {
    const int a = t > 0 ? t - 1 : t;
    const int b = t > 0 ? t : std::min<int>(t + 1, static_cast<int>(track.size()) - 1);
    if (a == b) {
        return {0.0, 0.0};
    }
    // Displacement over the step, expressed in the current ego frame.
    const SE3 rel = compose(track[static_cast<std::size_t>(t)].inverse(), track[static_cast<std::size_t>(b)]);
    const SE3 prev = compose(track[static_cast<std::size_t>(t)].inverse(), track[static_cast<std::size_t>(a)]);
    const Vec3 d{rel.translation[0] - prev.translation[0], rel.translation[1] - prev.translation[1],
                 rel.translation[2] - prev.translation[2]};
    return {d[2] / dt, -d[0] / dt};
}

} // namespace

CameraRig CameraRig::ring(int views, int height, int width) {
    if (views < 2 || views > 8) {
        throw ConfigError("camera rig needs 2 to 8 views, got " + std::to_string(views));
    }
    if (height < 1 || width < 1) {
        throw ConfigError("camera rig image extents must be positive");
    }
    CameraRig rig;
    rig.height = height;
    rig.width = width;
    rig.intrinsics.fx = width / 2.0; // 90 degree horizontal FOV
    rig.intrinsics.fy = width / 2.0;
    rig.intrinsics.cx = width / 2.0;
    rig.intrinsics.cy = height / 2.0;
    for (int v = 0; v < views; ++v) {
        const double heading = 2.0 * std::numbers::pi * v / views;
        SE3 cam;
        cam.rotation = yaw_quat(heading);
        const Vec3 fwd = cam.rotation.rotate({0.0, 0.0, 1.0});
        cam.translation = {0.5 * fwd[0], -0.2, 0.5 * fwd[2]};
        rig.camera_in_ego.push_back(cam);
    }
    return rig;
}

std::string to_string(TrackKind k) {
    switch (k) {
    case TrackKind::Straight:
        return "straight";
    case TrackKind::Curve:
        return "curve";
    case TrackKind::Weave:
        return "weave";
    case TrackKind::Static:
        return "static";
    }
    return "straight";
}

TrackKind track_kind_from_string(const std::string& s) {
    if (s == "straight") {
        return TrackKind::Straight;
    }
    if (s == "curve") {
        return TrackKind::Curve;
    }
    if (s == "weave") {
        return TrackKind::Weave;
    }
    if (s == "static") {
        return TrackKind::Static;
    }
    throw ConfigError("unknown track kind '" + s + "'");
}

void SceneConfig::validate() const {
    if (frames < 1) {
        throw ConfigError("scene frames must be >= 1");
    }
    if (horizon < 0) {
        throw ConfigError("scene horizon must be >= 0");
    }
    if (frames + horizon < 2) {
        throw ConfigError("ego track needs at least 2 poses");
    }
    if (views < 2 || views > 8) {
        throw ConfigError("views must be in [2, 8]");
    }
    if (height < 1 || width < 1) {
        throw ConfigError("image extents must be positive");
    }
    if (num_boxes < 1) {
        throw ConfigError("scene needs at least one box primitive");
    }
    if (!(dt > 0.0) || !(max_range > 0.0) || !(ego_height > 0.0) || speed_mps < 0.0) {
        throw ConfigError("scene dt, max_range and ego_height must be positive, speed non-negative");
    }
    if (speed_mps * dt > 5.0) {
        throw ConfigError("per-step ego translation exceeds 5 m");
    }
    if (std::abs(yaw_rate_dps * dt) > 30.0) {
        throw ConfigError("per-step ego rotation exceeds 30 degrees");
    }
}

void SceneConfig::write(KeyValueConfig& kv, const std::string& prefix) const {
    kv.set(prefix + "frames", frames);
    kv.set(prefix + "horizon", horizon);
    kv.set(prefix + "views", views);
    kv.set(prefix + "height", height);
    kv.set(prefix + "width", width);
    kv.set(prefix + "boxes", num_boxes);
    kv.set(prefix + "track", to_string(track));
    kv.set(prefix + "speed", speed_mps);
    kv.set(prefix + "yaw_rate", yaw_rate_dps);
    kv.set(prefix + "dt", dt);
    kv.set(prefix + "ego_height", ego_height);
    kv.set(prefix + "max_range", max_range);
}

SceneConfig SceneConfig::read(const KeyValueConfig& kv, const std::string& prefix) {
    SceneConfig c;
    c.frames = static_cast<int>(kv.get_int(prefix + "frames", c.frames));
    c.horizon = static_cast<int>(kv.get_int(prefix + "horizon", c.horizon));
    c.views = static_cast<int>(kv.get_int(prefix + "views", c.views));
    c.height = static_cast<int>(kv.get_int(prefix + "height", c.height));
    c.width = static_cast<int>(kv.get_int(prefix + "width", c.width));
    c.num_boxes = static_cast<int>(kv.get_int(prefix + "boxes", c.num_boxes));
    c.track = track_kind_from_string(kv.get_string(prefix + "track", to_string(c.track)));
    c.speed_mps = kv.get_double(prefix + "speed", c.speed_mps);
    c.yaw_rate_dps = kv.get_double(prefix + "yaw_rate", c.yaw_rate_dps);
    c.dt = kv.get_double(prefix + "dt", c.dt);
    c.ego_height = kv.get_double(prefix + "ego_height", c.ego_height);
    c.max_range = kv.get_double(prefix + "max_range", c.max_range);
    return c;
}

KeyValueConfig Scene::to_config() const {
    KeyValueConfig kv;
    kv.set("format", std::string("streamgeo-scene/1"));
    kv.set("ground_y", ground_y);
    kv.set("max_range", max_range);
    kv.set("dt", dt);
    kv.set("horizon", horizon);
    kv.set("image.height", rig.height);
    kv.set("image.width", rig.width);
    kv.set("intrinsics", std::vector<double>{rig.intrinsics.fx, rig.intrinsics.fy, rig.intrinsics.cx,
                                             rig.intrinsics.cy});
    kv.set("cameras", rig.views());
    for (int v = 0; v < rig.views(); ++v) {
        const auto a = rig.camera_in_ego[static_cast<std::size_t>(v)].to_vector();
        kv.set("camera." + std::to_string(v), std::vector<double>(a.begin(), a.end()));
    }
    kv.set("boxes", static_cast<std::int64_t>(boxes.size()));
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i];
        kv.set("box." + std::to_string(i), std::vector<double>{b.center[0], b.center[1], b.center[2],
                                                               b.half_extent[0], b.half_extent[1],
                                                               b.half_extent[2]});
    }
    kv.set("poses", static_cast<std::int64_t>(ego_track.size()));
    for (std::size_t i = 0; i < ego_track.size(); ++i) {
        const auto a = ego_track[i].to_vector();
        kv.set("pose." + std::to_string(i), std::vector<double>(a.begin(), a.end()));
    }
    return kv;
}

Scene Scene::from_config(const KeyValueConfig& kv) {
    if (kv.get_string("format", "") != "streamgeo-scene/1") {
        throw FormatError("scene config: missing or unknown format tag");
    }
    Scene s;
    s.ground_y = kv.get_double("ground_y");
    s.max_range = kv.get_double("max_range");
    s.dt = kv.get_double("dt");
    s.horizon = static_cast<int>(kv.get_int("horizon"));
    s.rig.height = static_cast<int>(kv.get_int("image.height"));
    s.rig.width = static_cast<int>(kv.get_int("image.width"));
    const auto k = kv.get_doubles("intrinsics");
    if (k.size() != 4) {
        throw FormatError("scene config: intrinsics needs 4 values");
    }
    s.rig.intrinsics = {k[0], k[1], k[2], k[3]};
    const auto cams = kv.get_int("cameras");
    for (std::int64_t v = 0; v < cams; ++v) {
        s.rig.camera_in_ego.push_back(SE3::from_vector(kv.get_doubles("camera." + std::to_string(v))));
    }
    const auto nb = kv.get_int("boxes");
    for (std::int64_t i = 0; i < nb; ++i) {
        const auto b = kv.get_doubles("box." + std::to_string(i));
        if (b.size() != 6) {
            throw FormatError("scene config: box needs 6 values");
        }
        s.boxes.push_back(Box{{b[0], b[1], b[2]}, {b[3], b[4], b[5]}});
    }
    const auto np = kv.get_int("poses");
    for (std::int64_t i = 0; i < np; ++i) {
        s.ego_track.push_back(SE3::from_vector(kv.get_doubles("pose." + std::to_string(i))));
    }
    if (s.ego_track.size() < 2 || s.boxes.empty()) {
        throw FormatError("scene config: needs >= 2 poses and >= 1 box");
    }
    return s;
}

std::array<float, EgoStatus::kDims> EgoStatus::to_features() const {
    std::array<float, kDims> f{};
    f[0] = static_cast<float>(velocity[0]);
    f[1] = static_cast<float>(velocity[1]);
    f[2] = static_cast<float>(acceleration[0]);
    f[3] = static_cast<float>(acceleration[1]);
    f[4 + std::clamp(command, 0, 2)] = 1.0F;
    return f;
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& config) {
    config.validate();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    Scene scene;
    scene.ground_y = config.ego_height;
    scene.max_range = config.max_range;
    scene.dt = config.dt;
    scene.horizon = config.horizon;
    scene.rig = CameraRig::ring(config.views, config.height, config.width);

    const int length = config.frames + config.horizon;
    const double speed = config.track == TrackKind::Static ? 0.0 : config.speed_mps;
    double yaw = 0.0;
    Vec3 pos{0.0, 0.0, 0.0};
    for (int i = 0; i < length; ++i) {
        SE3 p;
        p.rotation = yaw_quat(yaw);
        p.translation = pos;
        scene.ego_track.push_back(p);
        const double rate = track_yaw_rate(config, i);
        // Midpoint heading keeps curved tracks on a circular arc.
        const double mid = yaw + 0.5 * rate * config.dt;
        pos[0] += -std::sin(mid) * speed * config.dt;
        pos[2] += std::cos(mid) * speed * config.dt;
        yaw += rate * config.dt;
    }

    // Boxes stand on the ground beside the corridor the ego drives through.
    for (int b = 0; b < config.num_boxes; ++b) {
        const auto anchor = static_cast<std::size_t>(unit(rng) * length) % static_cast<std::size_t>(length);
        const SE3& at = scene.ego_track[anchor];
        Box box;
        box.half_extent = {0.5 + 1.5 * unit(rng), 0.5 + 1.5 * unit(rng), 0.5 + 1.5 * unit(rng)};
        const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
        const double lateral = side * (3.0 + box.half_extent[0] + 9.0 * unit(rng));
        const double ahead = -4.0 + 16.0 * unit(rng);
        const Vec3 local{lateral, 0.0, ahead};
        const Vec3 w = at.apply(local);
        box.center = {w[0], scene.ground_y - box.half_extent[1], w[2]};
        scene.boxes.push_back(box);
    }
    return scene;
}

double cast_ray(const Scene& scene, const Vec3& origin, const Vec3& dir, Vec3* normal, int* primitive) {
    double best = -1.0;
    Vec3 best_normal{0.0, 0.0, 0.0};
    int best_prim = -1;
    for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
        Vec3 n{};
        const double t = intersect_box(scene.boxes[i], origin, dir, n);
        if (t > 0.0 && (best < 0.0 || t < best)) {
            best = t;
            best_normal = n;
            best_prim = static_cast<int>(i);
        }
    }
    if (dir[1] > 0.0) {
        const double t = (scene.ground_y - origin[1]) / dir[1];
        if (t > 0.0 && (best < 0.0 || t < best)) {
            best = t;
            best_normal = {0.0, -1.0, 0.0};
            best_prim = static_cast<int>(scene.boxes.size());
        }
    }
    if (best > 0.0 && best * length(dir) > scene.max_range) {
        best = -1.0;
        best_prim = -1;
    }
    if (normal) {
        *normal = best_normal;
    }
    if (primitive) {
        *primitive = best_prim;
    }
    return best;
}

Waypoint waypoint_from_pose(const SE3& pose) {
    return Waypoint{pose.translation[2], -pose.translation[0], yaw_of(pose.rotation)};
}

Trajectory future_in_ego(const std::vector<SE3>& track, int t, int n) {
    if (t < 0 || n < 0 || static_cast<std::size_t>(t) + static_cast<std::size_t>(n) >= track.size()) {
        throw BoundsError("future_in_ego: horizon t=" + std::to_string(t) + " N=" + std::to_string(n) +
                          " exceeds track length " + std::to_string(track.size()));
    }
    Trajectory out;
    out.reserve(static_cast<std::size_t>(n));
    const SE3 inv = track[static_cast<std::size_t>(t)].inverse();
    for (int k = 1; k <= n; ++k) {
        out.push_back(waypoint_from_pose(compose(inv, track[static_cast<std::size_t>(t + k)])));
    }
    return out;
}

RenderedFrame render_frame(const Scene& scene, int t) {
    if (t < 0 || t >= static_cast<int>(scene.ego_track.size())) {
        throw BoundsError("render_frame: t=" + std::to_string(t) + " outside track of length " +
                          std::to_string(scene.ego_track.size()));
    }
    const auto& rig = scene.rig;
    const int V = rig.views();
    const int H = rig.height;
    const int W = rig.width;
    const auto& K = rig.intrinsics;
    const SE3& ego = scene.ego_track[static_cast<std::size_t>(t)];
    const SE3 world_to_ego = ego.inverse();

    RenderedFrame out;
    out.input.timestep = t;
    out.input.images = Tensor({V, H, W, 3});
    out.truth.pointmaps = Tensor({V, H, W, 3});
    out.truth.valid_mask.assign(static_cast<std::size_t>(V) * H * W, 0);

    for (int v = 0; v < V; ++v) {
        const SE3 cam_world = compose(ego, rig.camera_in_ego[static_cast<std::size_t>(v)]);
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c) {
                const Vec3 dc{(c + 0.5 - K.cx) / K.fx, (r + 0.5 - K.cy) / K.fy, 1.0};
                const Vec3 dw = cam_world.rotation.rotate(dc);
                Vec3 normal{};
                int prim = -1;
                const double hit = cast_ray(scene, cam_world.translation, dw, &normal, &prim);
                const std::size_t pix = (static_cast<std::size_t>(v) * H + r) * W + c;
                float* rgb = out.input.images.raw() + pix * 3;
                if (hit < 0.0) {
                    const float fade = 1.0F - 0.3F * static_cast<float>(r) / static_cast<float>(H);
                    rgb[0] = 0.55F * fade;
                    rgb[1] = 0.70F * fade;
                    rgb[2] = 0.90F * fade;
                    continue;
                }
                const Vec3 pw{cam_world.translation[0] + hit * dw[0], cam_world.translation[1] + hit * dw[1],
                              cam_world.translation[2] + hit * dw[2]};
                const Vec3 pe = world_to_ego.apply(pw);
                float* pt = out.truth.pointmaps.raw() + pix * 3;
                pt[0] = static_cast<float>(pe[0]);
                pt[1] = static_cast<float>(pe[1]);
                pt[2] = static_cast<float>(pe[2]);
                out.truth.valid_mask[pix] = 1;

                const double dist = hit * length(dw);
                const double lambert = std::abs(dot(normal, dw)) / length(dw);
                rgb[0] = static_cast<float>(std::exp(-dist / 30.0));
                rgb[1] = static_cast<float>(0.3 + 0.7 * lambert);
                rgb[2] = static_cast<float>(0.1 + 0.8 * std::fmod(0.618034 * (prim + 1), 1.0));
            }
        }
    }

    out.truth.rel_pose =
        t == 0 ? SE3::identity() : compose(scene.ego_track[static_cast<std::size_t>(t - 1)].inverse(), ego);
    const int available = static_cast<int>(scene.ego_track.size()) - 1 - t;
    out.truth.future_traj = future_in_ego(scene.ego_track, t, std::min(scene.horizon, available));

    const auto vel = bev_velocity(scene.ego_track, t, scene.dt);
    const auto vel_prev = t > 0 ? bev_velocity(scene.ego_track, t - 1, scene.dt) : vel;
    out.input.ego.velocity = vel;
    out.input.ego.acceleration = {(vel[0] - vel_prev[0]) / scene.dt, (vel[1] - vel_prev[1]) / scene.dt};
    const double final_yaw = out.truth.future_traj.empty() ? 0.0 : out.truth.future_traj.back().yaw;
    out.input.ego.command = final_yaw > 5.0 * kDeg ? 0 : (final_yaw < -5.0 * kDeg ? 2 : 1);
    return out;
}

std::vector<RenderedFrame> render_sequence(const Scene& scene, int frames, int threads) {
    if (frames < 0 || frames > static_cast<int>(scene.ego_track.size())) {
        throw BoundsError("render_sequence: frame count exceeds track length");
    }
    std::vector<RenderedFrame> out(static_cast<std::size_t>(frames));
    const int workers = std::max(1, std::min(threads, frames));
    if (workers == 1) {
        for (int t = 0; t < frames; ++t) {
            out[static_cast<std::size_t>(t)] = render_frame(scene, t);
        }
        return out;
    }
    {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (int t = w; t < frames; t += workers) {
                    out[static_cast<std::size_t>(t)] = render_frame(scene, t);
                }
            });
        }
    }
    return out;
}

} // namespace streamgeo
