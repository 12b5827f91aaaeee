#pragma once

#include "streamgeo/model.hpp"
#include "streamgeo/pose.hpp"
#include "streamgeo/scene.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace streamgeo {

inline constexpr std::size_t kDefaultSampleCap = 20000;

struct ChamferResult {
    // Empty when either side has no valid point.
    std::optional<double> acc;
    std::optional<double> comp;
};

// Mean nearest-neighbour distances: acc = pred -> gt, comp = gt -> pred.
// Sides larger than sample_cap are reduced by a seeded stratified subsample.
ChamferResult chamfer_acc_comp(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                               std::size_t sample_cap = kDefaultSampleCap, std::uint64_t seed = 0);

// Exhaustive nearest-neighbour distance from `p` to `cloud` (empty cloud -> +inf).
double brute_nearest(const Vec3& p, const std::vector<Vec3>& cloud);

// Points of a [.., 3] tensor whose mask byte is set, mapped through `pose`.
std::vector<Vec3> masked_points(std::span<const float> xyz, std::span<const std::uint8_t> mask,
                                const SE3& pose = SE3::identity());

struct DepthMetrics {
    double abs_rel = 0.0;
    double delta_125 = 0.0;
    std::size_t count = 0;
};

// Pixel-aligned ray-depth comparison; depth is the norm of the ego-frame point.
// Empty when no pixel is valid.
std::optional<DepthMetrics> ray_depth_metrics(std::span<const float> pred_points, std::span<const float> gt_points,
                                              std::span<const std::uint8_t> mask);

struct AucOptions {
    double max_threshold_deg = 30.0;
    double deg_per_meter = 1.0;
    int steps = 1000;
};

// Mean over thresholds tau_i = max * i / steps, i = 1..steps, of the fraction
// of errors <= tau_i.
double auc_from_errors(std::span<const double> errors_deg, double max_threshold_deg, int steps = 1000);

// Per-frame error of the globals after aligning both sequences to their first
// pose: max(rot_deg, trans_m * deg_per_meter). Frame 0 is skipped since it is
// the identity on both sides.
std::vector<double> pose_errors_deg(std::span<const SE3> pred_globals, std::span<const SE3> gt_globals,
                                    double deg_per_meter = 1.0);

// Empty for fewer than two frames.
std::optional<double> pose_auc(std::span<const SE3> pred_globals, std::span<const SE3> gt_globals,
                               const AucOptions& options = {});

struct PlanningL2 {
    std::vector<double> by_second; // bucket s holds waypoints ((s-1)*rate, s*rate]
    double average = 0.0;
};

PlanningL2 planning_l2(const Trajectory& pred, const Trajectory& gt, int steps_per_second = 2);

struct FrameMetrics {
    std::int64_t frame_index = 0;
    std::optional<double> acc;
    std::optional<double> comp;
    std::optional<double> abs_rel;
    std::optional<double> delta_125;
    std::vector<double> l2_by_second;
};

struct MetricReport {
    std::vector<FrameMetrics> frames;
    std::optional<double> acc_m;
    std::optional<double> comp_m;
    std::optional<double> abs_rel;
    std::optional<double> delta_125;
    std::optional<double> pose_auc;
    std::vector<double> l2_by_second;
    std::optional<double> l2_avg;

    // One row per frame.
    void write_csv(const std::filesystem::path& path) const;
    // One row of sequence-level values.
    void write_summary_csv(const std::filesystem::path& path) const;
    void print(std::ostream& os) const;
};

struct EvalOptions {
    std::size_t sample_cap = kDefaultSampleCap;
    std::uint64_t seed = 0;
    AucOptions auc;
    int steps_per_second = 2;
    int threads = 1;
};

// Accumulates predicted and GT relative poses to globals, lifts each frame's
// pointmaps into the first frame, and scores everything against GT.
MetricReport evaluate_sequence(std::span<const FramePrediction> preds, std::span<const GroundTruth> truths,
                               const EvalOptions& options = {});

} // namespace streamgeo
