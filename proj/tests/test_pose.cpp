#include <doctest.h>

#include "streamgeo/pose.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace streamgeo;

namespace {

constexpr double kPi = std::numbers::pi;

SE3 random_pose(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    SE3 p;
    p.translation = {n(rng), n(rng), n(rng)};
    p.rotation = Quat{n(rng), n(rng), n(rng), n(rng)}.normalized().canonical();
    return p;
}

void check_close(const SE3& a, const SE3& b, double tol) {
    for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(a.translation[i] - b.translation[i]) <= tol);
    }
    CHECK(rotation_angle_deg(a.rotation, b.rotation) <= tol * 180.0 / kPi * 10);
    const auto qa = a.rotation.canonical();
    const auto qb = b.rotation.canonical();
    CHECK(std::abs(qa.w - qb.w) <= tol);
    CHECK(std::abs(qa.x - qb.x) <= tol);
    CHECK(std::abs(qa.y - qb.y) <= tol);
    CHECK(std::abs(qa.z - qb.z) <= tol);
}

Mat3 yaw_matrix(double yaw) {
    // rotation about -y by yaw, written out by hand
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    return {{{c, 0.0, -s}, {0.0, 1.0, 0.0}, {s, 0.0, c}}};
}

} // namespace

TEST_CASE("compose with identity and inverse") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20; ++i) {
        const SE3 x = random_pose(rng);
        check_close(compose(x, SE3::identity()), x, 1e-12);
        check_close(compose(x, inverse(x)), SE3::identity(), 1e-6);
        check_close(compose(inverse(x), x), SE3::identity(), 1e-6);
    }
}

TEST_CASE("two 90 degree yaws give 180 degrees, checked against matrix products") {
    SE3 a;
    a.rotation = yaw_quat(kPi / 2);
    const SE3 c = compose(a, a);
    const Mat3 expected = matmul3(yaw_matrix(kPi / 2), yaw_matrix(kPi / 2));
    const Mat3 got = c.rotation.to_matrix();
    for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) {
            CHECK(got[r][k] == doctest::Approx(expected[r][k]).epsilon(1e-12));
        }
    }
    CHECK(std::abs(std::abs(yaw_of(c.rotation)) - kPi) < 1e-9);
    CHECK(rotation_angle_deg(c.rotation, Quat::identity()) == doctest::Approx(180.0).epsilon(1e-9));
}

TEST_CASE("yaw quaternion matches the hand-written matrix") {
    for (double yaw : {0.1, 0.7, -1.2, 2.5}) {
        const Mat3 m = yaw_quat(yaw).to_matrix();
        const Mat3 e = yaw_matrix(yaw);
        for (int r = 0; r < 3; ++r) {
            for (int k = 0; k < 3; ++k) {
                CHECK(m[r][k] == doctest::Approx(e[r][k]).epsilon(1e-12));
            }
        }
        CHECK(yaw_of(yaw_quat(yaw)) == doctest::Approx(yaw).epsilon(1e-12));
    }
}

TEST_CASE("compose agrees with applying transforms in sequence") {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 20; ++i) {
        const SE3 a = random_pose(rng);
        const SE3 b = random_pose(rng);
        const Vec3 p{0.3, -1.1, 2.0};
        const Vec3 direct = compose(a, b).apply(p);
        const Vec3 chained = a.apply(b.apply(p));
        for (int k = 0; k < 3; ++k) {
            CHECK(direct[k] == doctest::Approx(chained[k]).epsilon(1e-9));
        }
    }
}

TEST_CASE("compose is associative") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 50; ++i) {
        const SE3 a = random_pose(rng);
        const SE3 b = random_pose(rng);
        const SE3 c = random_pose(rng);
        check_close(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-6);
    }
}

TEST_CASE("compose keeps quaternions unit and canonical") {
    std::mt19937_64 rng(6);
    SE3 acc;
    for (int i = 0; i < 500; ++i) {
        acc = compose(acc, random_pose(rng));
        CHECK(std::abs(acc.rotation.norm() - 1.0) < 1e-6);
        CHECK(acc.rotation.w >= 0.0);
    }
}

TEST_CASE("accumulate simple sequences") {
    const std::vector<SE3> ident(6);
    for (const auto& g : accumulate(ident)) {
        check_close(g, SE3::identity(), 0.0);
    }
    SE3 step;
    step.translation = {1.0, 0.0, 0.0};
    const std::vector<SE3> rel(6, step);
    const auto g = accumulate(rel);
    REQUIRE(g.size() == 6);
    CHECK(g[0].translation[0] == 0.0);
    CHECK(g[5].translation[0] == doctest::Approx(5.0));
    CHECK(g[5].translation[1] == 0.0);
    CHECK(g[5].translation[2] == 0.0);
}

TEST_CASE("accumulate then re-difference recovers the inputs") {
    std::mt19937_64 rng(12);
    std::vector<SE3> rel(1);
    for (int i = 0; i < 100; ++i) {
        rel.push_back(random_pose(rng));
    }
    const auto back = differences(accumulate(rel));
    for (std::size_t t = 1; t < rel.size(); ++t) {
        check_close(back[t], rel[t], 1e-6);
    }
}

TEST_CASE("pose error") {
    std::mt19937_64 rng(2);
    const SE3 x = random_pose(rng);
    const auto same = pose_error(x, x);
    CHECK(same.rot_deg == 0.0);
    CHECK(same.trans_m == 0.0);

    SE3 flipped = x;
    flipped.rotation = Quat{-x.rotation.w, -x.rotation.x, -x.rotation.y, -x.rotation.z};
    CHECK(pose_error(flipped, x).rot_deg == doctest::Approx(0.0));

    SE3 a;
    SE3 b;
    a.rotation = Quat::from_axis_angle({0.0, -1.0, 0.0}, 0.2);
    b.rotation = Quat::from_axis_angle({0.0, -1.0, 0.0}, 0.2 + 30.0 * kPi / 180.0);
    b.translation = {3.0, 4.0, 0.0};
    const auto e = pose_error(a, b);
    CHECK(std::abs(e.rot_deg - 30.0) < 1e-4);
    CHECK(e.trans_m == doctest::Approx(5.0));
}

TEST_CASE("align_to_first re-expresses relative to the first pose") {
    std::mt19937_64 rng(4);
    std::vector<SE3> g;
    for (int i = 0; i < 5; ++i) {
        g.push_back(random_pose(rng));
    }
    const auto a = align_to_first(g);
    check_close(a[0], SE3::identity(), 1e-9);
    for (std::size_t i = 1; i < g.size(); ++i) {
        check_close(compose(g[0], a[i]), g[i], 1e-9);
    }
}

TEST_CASE("SE3 vector layout round trip") {
    std::mt19937_64 rng(9);
    const SE3 x = random_pose(rng);
    const auto v = x.to_vector();
    check_close(SE3::from_vector(v), x, 1e-12);
    CHECK(v[3] == x.rotation.w);
}
