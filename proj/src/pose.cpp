#include "streamgeo/pose.hpp"

#include "streamgeo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace streamgeo {

Quat Quat::from_axis_angle(const Vec3& axis, double angle_rad) {
    const double n = std::sqrt(axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]);
    if (n == 0.0) {
        return identity();
    }
    const double s = std::sin(angle_rad / 2.0) / n;
    return Quat{std::cos(angle_rad / 2.0), axis[0] * s, axis[1] * s, axis[2] * s}.canonical();
}

Quat Quat::from_matrix(const Mat3& r) {
    // Shepperd's method: pick the largest diagonal combination for stability.
    const double tr = r[0][0] + r[1][1] + r[2][2];
    Quat q;
    if (tr > 0.0) {
        const double s = std::sqrt(tr + 1.0) * 2.0;
        q = {0.25 * s, (r[2][1] - r[1][2]) / s, (r[0][2] - r[2][0]) / s, (r[1][0] - r[0][1]) / s};
    } else if (r[0][0] > r[1][1] && r[0][0] > r[2][2]) {
        const double s = std::sqrt(1.0 + r[0][0] - r[1][1] - r[2][2]) * 2.0;
        q = {(r[2][1] - r[1][2]) / s, 0.25 * s, (r[0][1] + r[1][0]) / s, (r[0][2] + r[2][0]) / s};
    } else if (r[1][1] > r[2][2]) {
        const double s = std::sqrt(1.0 + r[1][1] - r[0][0] - r[2][2]) * 2.0;
        q = {(r[0][2] - r[2][0]) / s, (r[0][1] + r[1][0]) / s, 0.25 * s, (r[1][2] + r[2][1]) / s};
    } else {
        const double s = std::sqrt(1.0 + r[2][2] - r[0][0] - r[1][1]) * 2.0;
        q = {(r[1][0] - r[0][1]) / s, (r[0][2] + r[2][0]) / s, (r[1][2] + r[2][1]) / s, 0.25 * s};
    }
    return q.normalized().canonical();
}

double Quat::norm() const {
    return std::sqrt(w * w + x * x + y * y + z * z);
}

Quat Quat::normalized() const {
    const double n = norm();
    if (n == 0.0 || !std::isfinite(n)) {
        throw ContractError("quaternion with zero or non-finite norm");
    }
    return {w / n, x / n, y / n, z / n};
}

Quat Quat::canonical() const {
    if (w < 0.0 || (w == 0.0 && (x < 0.0 || (x == 0.0 && (y < 0.0 || (y == 0.0 && z < 0.0)))))) {
        return {-w, -x, -y, -z};
    }
    return *this;
}

Mat3 Quat::to_matrix() const {
    const Quat q = normalized();
    const double ww = q.w * q.w;
    const double xx = q.x * q.x;
    const double yy = q.y * q.y;
    const double zz = q.z * q.z;
    return Mat3{{{ww + xx - yy - zz, 2.0 * (q.x * q.y - q.w * q.z), 2.0 * (q.x * q.z + q.w * q.y)},
                 {2.0 * (q.x * q.y + q.w * q.z), ww - xx + yy - zz, 2.0 * (q.y * q.z - q.w * q.x)},
                 {2.0 * (q.x * q.z - q.w * q.y), 2.0 * (q.y * q.z + q.w * q.x), ww - xx - yy + zz}}};
}

Vec3 Quat::rotate(const Vec3& v) const {
    // v' = v + 2 u x (u x v + w v), u = (x, y, z)
    const Vec3 u{x, y, z};
    const Vec3 c1{u[1] * v[2] - u[2] * v[1] + w * v[0], u[2] * v[0] - u[0] * v[2] + w * v[1],
                  u[0] * v[1] - u[1] * v[0] + w * v[2]};
    const Vec3 c2{u[1] * c1[2] - u[2] * c1[1], u[2] * c1[0] - u[0] * c1[2], u[0] * c1[1] - u[1] * c1[0]};
    return {v[0] + 2.0 * c2[0], v[1] + 2.0 * c2[1], v[2] + 2.0 * c2[2]};
}

Quat operator*(const Quat& a, const Quat& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z, a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x, a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

SE3 SE3::from_vector(std::span<const double> v7) {
    if (v7.size() != 7) {
        throw ContractError("SE3::from_vector expects 7 values");
    }
    SE3 p;
    p.translation = {v7[0], v7[1], v7[2]};
    const Quat q{v7[3], v7[4], v7[5], v7[6]};
    p.rotation = (std::abs(q.norm() - 1.0) <= 1e-12 ? q : q.normalized()).canonical();
    return p;
}

std::array<double, 7> SE3::to_vector() const {
    return {translation[0], translation[1], translation[2], rotation.w, rotation.x, rotation.y, rotation.z};
}

Vec3 SE3::apply(const Vec3& p) const {
    const Vec3 r = rotation.rotate(p);
    return {r[0] + translation[0], r[1] + translation[1], r[2] + translation[2]};
}

SE3 SE3::inverse() const {
    SE3 inv;
    inv.rotation = rotation.conjugate().canonical();
    const Vec3 t = inv.rotation.rotate(translation);
    inv.translation = {-t[0], -t[1], -t[2]};
    return inv;
}

SE3 compose(const SE3& a, const SE3& b) {
    SE3 c;
    c.rotation = (a.rotation * b.rotation).normalized().canonical();
    c.translation = a.apply(b.translation);
    return c;
}

SE3 inverse(const SE3& a) {
    return a.inverse();
}

std::vector<SE3> accumulate(std::span<const SE3> rel_poses) {
    std::vector<SE3> out;
    out.reserve(rel_poses.size());
    for (std::size_t i = 0; i < rel_poses.size(); ++i) {
        out.push_back(i == 0 ? SE3::identity() : compose(out.back(), rel_poses[i]));
    }
    return out;
}

std::vector<SE3> differences(std::span<const SE3> globals) {
    std::vector<SE3> out;
    out.reserve(globals.size());
    for (std::size_t i = 0; i < globals.size(); ++i) {
        out.push_back(i == 0 ? SE3::identity() : compose(globals[i - 1].inverse(), globals[i]));
    }
    return out;
}

std::vector<SE3> align_to_first(std::span<const SE3> globals) {
    std::vector<SE3> out;
    out.reserve(globals.size());
    if (globals.empty()) {
        return out;
    }
    const SE3 inv0 = globals.front().inverse();
    for (const auto& g : globals) {
        out.push_back(compose(inv0, g));
    }
    return out;
}

double rotation_angle_deg(const Quat& a, const Quat& b) {
    const Quat an = a.normalized();
    const Quat bn = b.normalized();
    // |<a,b>| folds the double cover.
    const double dot = std::abs(an.w * bn.w + an.x * bn.x + an.y * bn.y + an.z * bn.z);
    // Vector part of conj(a) * b, grouped so that identical inputs cancel exactly.
    const double rx = (an.w * bn.x - bn.w * an.x) - (an.y * bn.z - an.z * bn.y);
    const double ry = (an.w * bn.y - bn.w * an.y) - (an.z * bn.x - an.x * bn.z);
    const double rz = (an.w * bn.z - bn.w * an.z) - (an.x * bn.y - an.y * bn.x);
    // atan2 form stays accurate near zero where acos(dot) loses digits.
    const double vec = std::sqrt(rx * rx + ry * ry + rz * rz);
    const double angle = 2.0 * std::atan2(vec, std::min(dot, 1.0));
    return angle * 180.0 / std::numbers::pi;
}

PoseError pose_error(const SE3& pred, const SE3& gt) {
    PoseError e;
    e.rot_deg = rotation_angle_deg(pred.rotation, gt.rotation);
    const double dx = pred.translation[0] - gt.translation[0];
    const double dy = pred.translation[1] - gt.translation[1];
    const double dz = pred.translation[2] - gt.translation[2];
    e.trans_m = std::sqrt(dx * dx + dy * dy + dz * dz);
    return e;
}

Mat3 matmul3(const Mat3& a, const Mat3& b) {
    Mat3 c{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            for (int k = 0; k < 3; ++k) {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    return c;
}

Quat yaw_quat(double yaw_rad) {
    return Quat::from_axis_angle({0.0, -1.0, 0.0}, yaw_rad);
}

double yaw_of(const Quat& q) {
    const Vec3 f = q.rotate({0.0, 0.0, 1.0});
    return std::atan2(-f[0], f[2]);
}

} // namespace streamgeo
