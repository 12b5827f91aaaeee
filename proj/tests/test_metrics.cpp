#include <doctest.h>

#include "streamgeo/errors.hpp"
#include "streamgeo/io.hpp"
#include "streamgeo/metrics.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace streamgeo;

namespace {

std::vector<Vec3> random_cloud(std::size_t n, std::uint64_t seed, double scale = 5.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<Vec3> out(n);
    for (auto& p : out) {
        p = {u(rng), u(rng), u(rng)};
    }
    return out;
}

double brute_mean(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double s = 0.0;
    for (const auto& p : from) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : to) {
            best = std::min(best, std::sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) +
                                            (p[2] - q[2]) * (p[2] - q[2])));
        }
        s += best;
    }
    return s / static_cast<double>(from.size());
}

// Literal grid sweep: fraction of errors <= tau at each of the 1000 thresholds.
double grid_auc(const std::vector<double>& errors, double max_deg) {
    double total = 0.0;
    for (int i = 1; i <= 1000; ++i) {
        const double tau = max_deg * i / 1000.0;
        int below = 0;
        for (double e : errors) {
            below += e <= tau ? 1 : 0;
        }
        total += static_cast<double>(below) / static_cast<double>(errors.size());
    }
    return total / 1000.0;
}

Trajectory ramp(int n, double slope) {
    Trajectory t;
    for (int k = 1; k <= n; ++k) {
        t.push_back({slope * k, 0.0, 0.1 * k});
    }
    return t;
}

} // namespace

TEST_CASE("chamfer identical sets") {
    const auto p = random_cloud(200, 1);
    const auto r = chamfer_acc_comp(p, p);
    CHECK(*r.acc == 0.0);
    CHECK(*r.comp == 0.0);
}

TEST_CASE("chamfer hand example") {
    const auto r = chamfer_acc_comp({{0.0, 0.0, 0.0}}, {{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}});
    CHECK(*r.acc == 0.0);
    CHECK(*r.comp == doctest::Approx(0.5));
}

TEST_CASE("chamfer matches exhaustive nearest neighbours and is symmetric") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = random_cloud(300 + seed * 37, seed * 2 + 1);
        const auto g = random_cloud(250 + seed * 11, seed * 2 + 2);
        const auto r = chamfer_acc_comp(p, g);
        CHECK(*r.acc == doctest::Approx(brute_mean(p, g)).epsilon(1e-12));
        CHECK(*r.comp == doctest::Approx(brute_mean(g, p)).epsilon(1e-12));
        const auto s = chamfer_acc_comp(g, p);
        CHECK(*s.comp == *r.acc);
        CHECK(*s.acc == *r.comp);
        for (std::size_t i = 0; i < 20; ++i) {
            CHECK(brute_nearest(p[i], g) >= 0.0);
        }
    }
}

TEST_CASE("chamfer handles duplicate points and degenerate layouts") {
    std::vector<Vec3> line;
    for (int i = 0; i < 100; ++i) {
        line.push_back({static_cast<double>(i % 7), 0.0, 0.0});
    }
    const std::vector<Vec3> probe{{3.2, 0.0, 0.0}, {-1.0, 1.0, 0.0}};
    const auto r = chamfer_acc_comp(probe, line);
    CHECK(*r.acc == doctest::Approx(brute_mean(probe, line)));
}

TEST_CASE("chamfer with an empty side is undefined, not zero") {
    const auto p = random_cloud(10, 3);
    const auto r = chamfer_acc_comp(p, {});
    CHECK_FALSE(r.acc.has_value());
    CHECK_FALSE(r.comp.has_value());
    CHECK_FALSE(chamfer_acc_comp({}, p).acc.has_value());
    CHECK_THROWS_AS(chamfer_acc_comp(p, p, 0), ConfigError);
}

TEST_CASE("chamfer is invariant to a shared rigid transform") {
    const auto p = random_cloud(400, 7);
    const auto g = random_cloud(380, 8);
    SE3 x;
    x.rotation = Quat::from_axis_angle({0.3, -0.8, 0.5}, 1.1);
    x.translation = {12.0, -3.0, 40.0};
    std::vector<Vec3> px;
    std::vector<Vec3> gx;
    for (const auto& q : p) {
        px.push_back(x.apply(q));
    }
    for (const auto& q : g) {
        gx.push_back(x.apply(q));
    }
    const auto a = chamfer_acc_comp(p, g);
    const auto b = chamfer_acc_comp(px, gx);
    CHECK(std::abs(*a.acc - *b.acc) < 1e-5);
    CHECK(std::abs(*a.comp - *b.comp) < 1e-5);
}

TEST_CASE("chamfer subsampling is seeded and bounded") {
    const auto p = random_cloud(5000, 9);
    const auto g = random_cloud(5000, 10);
    const auto a = chamfer_acc_comp(p, g, 500, 1);
    const auto b = chamfer_acc_comp(p, g, 500, 1);
    CHECK(*a.acc == *b.acc);
    CHECK(*a.comp == *b.comp);
    const auto c = chamfer_acc_comp(p, g, 500, 2);
    CHECK(*a.acc != *c.acc);
    // a sparser target can only push nearest neighbours further away on average
    const auto full = chamfer_acc_comp(p, g);
    CHECK(*a.acc > *full.acc);
    // below the cap nothing is dropped and the seed is irrelevant
    CHECK(*chamfer_acc_comp(p, g, 5000, 3).acc == *full.acc);
}

TEST_CASE("masked_points keeps valid pixels and applies the pose") {
    const std::vector<float> xyz{1, 2, 3, 4, 5, 6};
    const std::vector<std::uint8_t> mask{0, 1};
    SE3 shift;
    shift.translation = {1.0, 0.0, 0.0};
    const auto pts = masked_points(xyz, mask, shift);
    REQUIRE(pts.size() == 1);
    CHECK(pts[0] == Vec3{5.0, 5.0, 6.0});
    CHECK_THROWS_AS(masked_points(xyz, std::vector<std::uint8_t>{1}), ContractError);
}

TEST_CASE("ray depth metrics closed forms") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> u(1.0F, 30.0F);
    std::vector<float> gt(300);
    for (auto& v : gt) {
        v = u(rng);
    }
    const std::vector<std::uint8_t> mask(100, 1);

    const auto same = ray_depth_metrics(gt, gt, mask);
    CHECK(same->abs_rel == 0.0);
    CHECK(same->delta_125 == 1.0);

    std::vector<double> scaled_d(gt.begin(), gt.end());
    std::vector<float> scaled(300);
    for (std::size_t i = 0; i < 300; ++i) {
        scaled[i] = static_cast<float>(1.3 * scaled_d[i]);
    }
    const auto far = ray_depth_metrics(scaled, gt, mask);
    CHECK(far->delta_125 == 0.0);
    CHECK(far->abs_rel == doctest::Approx(0.3).epsilon(1e-6));

    std::vector<float> mixed = gt;
    for (std::size_t i = 0; i < 150; ++i) {
        mixed[i] = 2.0F * gt[i];
    }
    const auto half = ray_depth_metrics(mixed, gt, mask);
    CHECK(half->delta_125 == 0.5);
    CHECK(half->abs_rel == doctest::Approx(0.5));
}

TEST_CASE("ray depth honours the mask") {
    const std::vector<float> gt{0, 0, 5, 0, 0, 0};
    const std::vector<float> pred{0, 0, 5, 7, 7, 7};
    const auto r = ray_depth_metrics(pred, gt, std::vector<std::uint8_t>{1, 0});
    CHECK(r->abs_rel == 0.0);
    CHECK(r->count == 1);
    CHECK_FALSE(ray_depth_metrics(pred, gt, std::vector<std::uint8_t>{0, 0}).has_value());
}

TEST_CASE("abs rel grows with prediction noise") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(2.0F, 40.0F);
    std::vector<float> gt(3000);
    for (auto& v : gt) {
        v = u(rng);
    }
    const std::vector<std::uint8_t> mask(1000, 1);
    double previous = 0.0;
    for (double sigma : {0.0, 0.05, 0.2, 0.5, 1.0, 2.0}) {
        double sum = 0.0;
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            std::mt19937_64 noise_rng(seed);
            std::normal_distribution<float> n(0.0F, static_cast<float>(sigma));
            std::vector<float> pred = gt;
            for (auto& v : pred) {
                v += sigma > 0.0 ? n(noise_rng) : 0.0F;
            }
            sum += ray_depth_metrics(pred, gt, mask)->abs_rel;
        }
        CHECK(sum / 8.0 >= previous);
        previous = sum / 8.0;
    }
}

TEST_CASE("AUC grid cases") {
    const std::vector<double> perfect{0.0, 0.0, 0.0};
    CHECK(auc_from_errors(perfect, 30.0) == 1.0);
    const std::vector<double> boundary{30.0, 30.0};
    CHECK(auc_from_errors(boundary, 30.0) == doctest::Approx(1.0 / 1000.0));
    const std::vector<double> two{10.0, 20.0};
    CHECK(auc_from_errors(two, 30.0) == doctest::Approx(grid_auc(two, 30.0)).epsilon(1e-12));
    CHECK(auc_from_errors(two, 30.0) == doctest::Approx(0.5005).epsilon(1e-12));
    const std::vector<double> spread{0.5, 3.0, 7.7, 12.0, 29.9, 31.0, 200.0};
    CHECK(auc_from_errors(spread, 30.0) == doctest::Approx(grid_auc(spread, 30.0)).epsilon(1e-12));
}

TEST_CASE("pose AUC on aligned globals") {
    std::vector<SE3> gt(4);
    for (std::size_t t = 0; t < gt.size(); ++t) {
        gt[t].translation = {0.0, 0.0, 2.0 * static_cast<double>(t)};
        gt[t].rotation = yaw_quat(0.1 * static_cast<double>(t));
    }
    CHECK(*pose_auc(gt, gt) == 1.0);

    // a rigid offset of the whole predicted sequence disappears after alignment
    SE3 offset;
    offset.translation = {5.0, 1.0, -3.0};
    offset.rotation = yaw_quat(0.7);
    std::vector<SE3> moved;
    for (const auto& g : gt) {
        moved.push_back(compose(offset, g));
    }
    CHECK(*pose_auc(moved, gt) == doctest::Approx(1.0));

    std::vector<SE3> pred = gt;
    SE3 turn;
    turn.rotation = yaw_quat(10.0 * std::numbers::pi / 180.0);
    pred[1].rotation = compose(gt[1], turn).rotation;
    pred[2].translation[0] += 20.0;
    pred[3] = gt[3];
    const auto errors = pose_errors_deg(pred, gt);
    REQUIRE(errors.size() == 3);
    CHECK(errors[0] == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(errors[1] == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(errors[2] == doctest::Approx(0.0));
    CHECK(*pose_auc(pred, gt) == doctest::Approx(grid_auc({10.0, 20.0, 0.0}, 30.0)).epsilon(1e-9));
    CHECK_FALSE(pose_auc(std::vector<SE3>(1), std::vector<SE3>(1)).has_value());
}

TEST_CASE("planning L2 buckets") {
    const Trajectory gt = ramp(6, 2.0);
    const auto zero = planning_l2(gt, gt);
    CHECK(zero.by_second == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(zero.average == 0.0);

    Trajectory shifted = gt;
    for (auto& w : shifted) {
        w.x += 1.0;
        w.yaw += 3.0;
    }
    const auto one = planning_l2(shifted, gt);
    for (double v : one.by_second) {
        CHECK(v == doctest::Approx(1.0));
    }

    // error grows by one metre per waypoint: buckets {1,2} {3,4} {5,6}
    Trajectory off = gt;
    for (std::size_t k = 0; k < off.size(); ++k) {
        off[k].y += static_cast<double>(k + 1);
    }
    const auto r = planning_l2(off, gt);
    REQUIRE(r.by_second.size() == 3);
    CHECK(r.by_second[0] == doctest::Approx(1.5));
    CHECK(r.by_second[1] == doctest::Approx(3.5));
    CHECK(r.by_second[2] == doctest::Approx(5.5));
    CHECK(r.average == doctest::Approx(3.5));
    CHECK_THROWS_AS(planning_l2(ramp(5, 1.0), gt), ContractError);
}

TEST_CASE("GT substitution drives every metric to its ideal value") {
    SceneConfig sc;
    sc.frames = 6;
    const Scene scene = generate_scene(13, sc);
    std::vector<GroundTruth> truths;
    std::vector<FramePrediction> preds;
    for (const auto& r : render_sequence(scene, 6, 2)) {
        truths.push_back(r.truth);
        FramePrediction p;
        p.frame_index = r.input.timestep;
        p.pointmaps = r.truth.pointmaps;
        p.pose = r.truth.rel_pose;
        p.trajectory = r.truth.future_traj;
        preds.push_back(p);
    }
    EvalOptions opts;
    opts.threads = 3;
    const auto rep = evaluate_sequence(preds, truths, opts);
    CHECK(std::abs(*rep.acc_m) <= 1e-9);
    CHECK(std::abs(*rep.comp_m) <= 1e-9);
    CHECK(std::abs(*rep.abs_rel) <= 1e-9);
    CHECK(std::abs(*rep.delta_125 - 1.0) <= 1e-9);
    CHECK(std::abs(*rep.pose_auc - 1.0) <= 1e-9);
    CHECK(std::abs(*rep.l2_avg) <= 1e-9);
    CHECK(rep.frames.size() == 6);

    const auto dir = std::filesystem::temp_directory_path() / "streamgeo_metrics_test";
    std::filesystem::create_directories(dir);
    rep.write_csv(dir / "m.csv");
    rep.write_summary_csv(dir / "s.csv");
    const auto rows = read_csv(dir / "m.csv");
    CHECK(rows.size() == 7);
    CHECK(rows[0][0] == "frame");
    const auto summary = read_csv(dir / "s.csv");
    CHECK(summary.size() == 2);
    std::filesystem::remove_all(dir);
}
