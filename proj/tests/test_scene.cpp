#include <doctest.h>

#include "streamgeo/errors.hpp"
#include "streamgeo/scene.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace streamgeo;

namespace {

std::string config_text(const Scene& s) {
    std::ostringstream os;
    s.to_config().write(os);
    return os.str();
}

Scene single_box_scene() {
    Scene s;
    s.rig = CameraRig::ring(4, 48, 64);
    s.horizon = 2;
    s.ego_track.assign(4, SE3::identity());
    s.boxes.push_back(Box{{0.0, 0.0, 11.0}, {1.0, 1.0, 1.0}});
    return s;
}

bool on_box_surface(const Box& b, const Vec3& p, double tol) {
    bool inside = true;
    bool on_face = false;
    for (int k = 0; k < 3; ++k) {
        const double d = std::abs(p[k] - b.center[k]);
        inside = inside && d <= b.half_extent[k] + tol;
        on_face = on_face || std::abs(d - b.half_extent[k]) <= tol;
    }
    return inside && on_face;
}

} // namespace

TEST_CASE("generate_scene is deterministic and echoes the config") {
    SceneConfig c;
    c.num_boxes = 10;
    const Scene a = generate_scene(1, c);
    const Scene b = generate_scene(1, c);
    CHECK(config_text(a) == config_text(b));
    CHECK(a.boxes.size() == 10);
    CHECK(a.ego_track.size() == static_cast<std::size_t>(c.frames + c.horizon));
    CHECK(a.frames() == c.frames);
    CHECK(config_text(generate_scene(2, c)) != config_text(a));
}

TEST_CASE("scene config validation") {
    SceneConfig c;
    c.num_boxes = 0;
    CHECK_THROWS_AS(generate_scene(1, c), ConfigError);
    c = SceneConfig{};
    c.views = 9;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SceneConfig{};
    c.views = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SceneConfig{};
    c.speed_mps = 40.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SceneConfig{};
    c.yaw_rate_dps = 90.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("scene text config round trip") {
    const Scene a = generate_scene(4, SceneConfig{});
    const Scene b = Scene::from_config(a.to_config());
    CHECK(config_text(a) == config_text(b));
    KeyValueConfig kv;
    kv.set("format", "something-else");
    CHECK_THROWS_AS(Scene::from_config(kv), FormatError);
}

TEST_CASE("straight track has identity relative rotations") {
    SceneConfig c;
    c.track = TrackKind::Straight;
    const Scene s = generate_scene(3, c);
    for (int t = 0; t < s.frames(); ++t) {
        const auto f = render_frame(s, t);
        CHECK(rotation_angle_deg(f.truth.rel_pose.rotation, Quat::identity()) < 1e-9);
    }
}

TEST_CASE("static ego gives identity poses and a zero future") {
    SceneConfig c;
    c.track = TrackKind::Static;
    c.frames = 3;
    const Scene s = generate_scene(3, c);
    for (int t = 0; t < s.frames(); ++t) {
        const auto f = render_frame(s, t);
        CHECK(f.truth.rel_pose.translation == Vec3{0.0, 0.0, 0.0});
        REQUIRE(f.truth.future_traj.size() == static_cast<std::size_t>(c.horizon));
        for (const auto& w : f.truth.future_traj) {
            CHECK(w == Waypoint{0.0, 0.0, 0.0});
        }
    }
}

TEST_CASE("box 10 m ahead: centre pixel of the front view hits its face analytically") {
    const Scene s = single_box_scene();
    const auto f = render_frame(s, 0);
    const auto& rig = s.rig;
    const int r = rig.height / 2;
    const int c = rig.width / 2;
    const std::size_t pix = static_cast<std::size_t>(r * rig.width + c);
    REQUIRE(f.truth.valid_mask[pix] == 1);

    // camera centre and ray through the pixel centre, intersected with the plane z = 10
    const Vec3 origin = rig.camera_in_ego[0].translation;
    const double dx = (c + 0.5 - rig.intrinsics.cx) / rig.intrinsics.fx;
    const double dy = (r + 0.5 - rig.intrinsics.cy) / rig.intrinsics.fy;
    const double lambda = (10.0 - origin[2]) / 1.0;
    const Vec3 expected{origin[0] + lambda * dx, origin[1] + lambda * dy, 10.0};
    for (int k = 0; k < 3; ++k) {
        CHECK(f.truth.pointmaps[3 * pix + k] == doctest::Approx(expected[k]).epsilon(1e-5));
    }
    CHECK(f.truth.pointmaps[3 * pix + 2] == doctest::Approx(10.0).epsilon(1e-6));
}

TEST_CASE("valid points reproject into their own pixel") {
    const Scene s = generate_scene(9, SceneConfig{});
    const auto& rig = s.rig;
    double worst = 0.0;
    std::size_t valid = 0;
    for (int t : {0, 5, 11}) {
        const auto f = render_frame(s, t);
        for (int v = 0; v < rig.views(); ++v) {
            const SE3 ego_to_cam = rig.camera_in_ego[static_cast<std::size_t>(v)].inverse();
            for (int r = 0; r < rig.height; ++r) {
                for (int c = 0; c < rig.width; ++c) {
                    const std::size_t i = static_cast<std::size_t>((v * rig.height + r) * rig.width + c);
                    if (f.truth.valid_mask[i] == 0) {
                        for (int k = 0; k < 3; ++k) {
                            CHECK(f.truth.pointmaps[3 * i + k] == 0.0F);
                        }
                        continue;
                    }
                    ++valid;
                    const Vec3 p = ego_to_cam.apply(
                        {f.truth.pointmaps[3 * i], f.truth.pointmaps[3 * i + 1], f.truth.pointmaps[3 * i + 2]});
                    REQUIRE(p[2] > 0.0);
                    const double u = rig.intrinsics.fx * p[0] / p[2] + rig.intrinsics.cx;
                    const double w = rig.intrinsics.fy * p[1] / p[2] + rig.intrinsics.cy;
                    worst = std::max(worst, std::hypot(u - (c + 0.5), w - (r + 0.5)));
                }
            }
        }
    }
    CHECK(valid > 1000);
    CHECK(worst < 0.5);
}

TEST_CASE("valid points lie on scene geometry in world coordinates") {
    const Scene s = generate_scene(5, SceneConfig{});
    for (int t : {0, 7}) {
        const auto f = render_frame(s, t);
        const SE3& ego = s.ego_track[static_cast<std::size_t>(t)];
        for (std::size_t i = 0; i < f.truth.valid_mask.size(); ++i) {
            if (f.truth.valid_mask[i] == 0) {
                continue;
            }
            const Vec3 w = ego.apply(
                {f.truth.pointmaps[3 * i], f.truth.pointmaps[3 * i + 1], f.truth.pointmaps[3 * i + 2]});
            bool hit = std::abs(w[1] - s.ground_y) < 1e-4;
            for (const auto& b : s.boxes) {
                hit = hit || on_box_surface(b, w, 1e-4);
            }
            CHECK(hit);
        }
    }
}

TEST_CASE("accumulated GT relative poses reproduce the track") {
    SceneConfig c;
    c.frames = 100;
    c.track = TrackKind::Weave;
    const Scene s = generate_scene(2, c);
    std::vector<SE3> rel;
    for (int t = 0; t < s.frames(); ++t) {
        rel.push_back(render_frame(s, t).truth.rel_pose);
        CHECK(std::abs(rel.back().rotation.norm() - 1.0) < 1e-6);
    }
    const auto globals = accumulate(rel);
    const auto track = align_to_first(std::span<const SE3>(s.ego_track).first(static_cast<std::size_t>(s.frames())));
    for (std::size_t t = 0; t < globals.size(); ++t) {
        const auto e = pose_error(globals[t], track[t]);
        CHECK(e.trans_m < 1e-5);
        CHECK(e.rot_deg < 1e-5);
    }
}

TEST_CASE("future_in_ego") {
    SceneConfig c;
    c.track = TrackKind::Straight;
    c.speed_mps = 4.0;
    const Scene s = generate_scene(1, c);
    const auto fut = future_in_ego(s.ego_track, 3, 6);
    REQUIRE(fut.size() == 6);
    for (int k = 1; k <= 6; ++k) {
        CHECK(fut[static_cast<std::size_t>(k - 1)].x == doctest::Approx(k * 4.0 * 0.5));
        CHECK(std::abs(fut[static_cast<std::size_t>(k - 1)].y) < 1e-12);
        CHECK(std::abs(fut[static_cast<std::size_t>(k - 1)].yaw) < 1e-12);
    }
    CHECK(future_in_ego(s.ego_track, 3, 0).empty());
    CHECK_THROWS_AS(future_in_ego(s.ego_track, static_cast<int>(s.ego_track.size()) - 2, 6), BoundsError);
}

TEST_CASE("quarter turn over four steps ends at yaw pi/2") {
    const double pi = std::numbers::pi;
    SE3 step;
    step.rotation = yaw_quat(pi / 8.0);
    step.translation = {-0.3, 0.0, 2.0};
    std::vector<SE3> track{SE3::identity()};
    for (int k = 0; k < 4; ++k) {
        track.push_back(compose(track.back(), step));
    }
    const auto fut = future_in_ego(track, 0, 4);
    CHECK(fut.back().yaw == doctest::Approx(pi / 2.0).epsilon(1e-12));
    const SE3 rel = compose(inverse(track[0]), track[4]);
    CHECK(fut.back().x == doctest::Approx(rel.translation[2]));
    CHECK(fut.back().y == doctest::Approx(-rel.translation[0]));
    // a left turn moves the ego to the left: positive bird's-eye y
    CHECK(fut.back().y > 0.0);
}

TEST_CASE("render_frame bounds and image range") {
    const Scene s = generate_scene(1, SceneConfig{});
    CHECK_THROWS_AS(render_frame(s, -1), BoundsError);
    CHECK_THROWS_AS(render_frame(s, static_cast<int>(s.ego_track.size())), BoundsError);
    const auto f = render_frame(s, 2);
    CHECK(f.input.images.shape() == std::vector<std::int64_t>{4, 48, 64, 3});
    for (float v : f.input.images.data()) {
        CHECK((v >= 0.0F && v <= 1.0F));
    }
    CHECK(f.input.timestep == 2);
    const auto feats = f.input.ego.to_features();
    CHECK(feats[4] + feats[5] + feats[6] == 1.0F);
}

TEST_CASE("parallel rendering matches serial rendering") {
    const Scene s = generate_scene(6, SceneConfig{});
    const auto a = render_sequence(s, 6, 1);
    const auto b = render_sequence(s, 6, 4);
    for (std::size_t t = 0; t < a.size(); ++t) {
        CHECK(a[t].input.images == b[t].input.images);
        CHECK(a[t].truth.pointmaps == b[t].truth.pointmaps);
        CHECK(a[t].truth.valid_mask == b[t].truth.valid_mask);
    }
}
