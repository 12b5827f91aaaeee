#pragma once

#include <array>
#include <span>
#include <vector>

namespace streamgeo {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

// Unit quaternion, Hamilton convention, stored (w, x, y, z).
struct Quat {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    static Quat identity() { return {}; }
    static Quat from_axis_angle(const Vec3& axis, double angle_rad);
    static Quat from_matrix(const Mat3& r);

    double norm() const;
    Quat normalized() const;
    // Sign flipped so that w >= 0 (q and -q are the same rotation).
    Quat canonical() const;
    Quat conjugate() const { return {w, -x, -y, -z}; }
    Mat3 to_matrix() const;
    Vec3 rotate(const Vec3& v) const;
};

Quat operator*(const Quat& a, const Quat& b);

// Rigid transform p -> rotation * p + translation.
struct SE3 {
    Vec3 translation{0.0, 0.0, 0.0};
    Quat rotation{};

    static SE3 identity() { return {}; }
    // Stored layout (tx, ty, tz, qw, qx, qy, qz).
    static SE3 from_vector(std::span<const double> v7);
    std::array<double, 7> to_vector() const;

    Vec3 apply(const Vec3& p) const;
    SE3 inverse() const;
};

SE3 compose(const SE3& a, const SE3& b);
SE3 inverse(const SE3& a);

// global_0 = identity, global_t = global_{t-1} o rel_t. rel_poses[0] is ignored
// (the first frame has no predecessor).
std::vector<SE3> accumulate(std::span<const SE3> rel_poses);

// global_{t-1}^-1 o global_t for t >= 1; element 0 is identity.
std::vector<SE3> differences(std::span<const SE3> globals);

// Re-expresses every pose relative to the first one.
std::vector<SE3> align_to_first(std::span<const SE3> globals);

struct PoseError {
    double rot_deg = 0.0;
    double trans_m = 0.0;
};

PoseError pose_error(const SE3& pred, const SE3& gt);

// Geodesic angle between two rotations, in degrees.
double rotation_angle_deg(const Quat& a, const Quat& b);

Mat3 matmul3(const Mat3& a, const Mat3& b);

// Ego frames use camera axes: x right, y down, z forward. Yaw is a
// counter-clockwise rotation seen from above, i.e. about -y.
Quat yaw_quat(double yaw_rad);
double yaw_of(const Quat& q);

} // namespace streamgeo
