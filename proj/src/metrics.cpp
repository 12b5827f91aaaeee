#include "streamgeo/metrics.hpp"

#include "streamgeo/errors.hpp"
#include "streamgeo/io.hpp"
#include "streamgeo/model_config.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

namespace streamgeo {

namespace {

double dist2(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

class KdTree {
public:
    explicit KdTree(const std::vector<Vec3>& points) : points_(points), order_(points.size()) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        build(0, order_.size(), 0);
    }

    double nearest(const Vec3& q) const {
        double best = std::numeric_limits<double>::infinity();
        search(0, order_.size(), 0, q, best);
        return std::sqrt(best);
    }

private:
    static constexpr std::size_t kLeaf = 8;

    void build(std::size_t lo, std::size_t hi, int axis) {
        if (hi - lo <= kLeaf) {
            return;
        }
        const std::size_t mid = lo + (hi - lo) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(lo),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(hi),
                         [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
        build(lo, mid, (axis + 1) % 3);
        build(mid + 1, hi, (axis + 1) % 3);
    }

    void search(std::size_t lo, std::size_t hi, int axis, const Vec3& q, double& best) const {
        if (hi - lo <= kLeaf) {
            for (std::size_t i = lo; i < hi; ++i) {
                best = std::min(best, dist2(q, points_[order_[i]]));
            }
            return;
        }
        const std::size_t mid = lo + (hi - lo) / 2;
        const Vec3& split = points_[order_[mid]];
        best = std::min(best, dist2(q, split));
        const double diff = q[axis] - split[axis];
        const int next = (axis + 1) % 3;
        if (diff < 0) {
            search(lo, mid, next, q, best);
            if (diff * diff < best) {
                search(mid + 1, hi, next, q, best);
            }
        } else {
            search(mid + 1, hi, next, q, best);
            if (diff * diff < best) {
                search(lo, mid, next, q, best);
            }
        }
    }

    const std::vector<Vec3>& points_;
    std::vector<std::size_t> order_;
};

std::vector<Vec3> stratified(const std::vector<Vec3>& points, std::size_t cap, std::uint64_t seed) {
    if (points.size() <= cap) {
        return points;
    }
    std::mt19937_64 rng(seed);
    std::vector<Vec3> out;
    out.reserve(cap);
    const double stride = static_cast<double>(points.size()) / static_cast<double>(cap);
    for (std::size_t i = 0; i < cap; ++i) {
        const auto lo = static_cast<std::size_t>(std::floor(stride * static_cast<double>(i)));
        const auto hi = std::min(points.size(), static_cast<std::size_t>(std::floor(stride * static_cast<double>(i + 1))));
        std::uniform_int_distribution<std::size_t> pick(lo, std::max(lo, hi - 1));
        out.push_back(points[pick(rng)]);
    }
    return out;
}

double mean_nearest(const std::vector<Vec3>& from, const KdTree& to) {
    double sum = 0.0;
    for (const auto& p : from) {
        sum += to.nearest(p);
    }
    return sum / static_cast<double>(from.size());
}

std::optional<double> mean_of(const std::vector<FrameMetrics>& frames, std::optional<double> FrameMetrics::*field) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& f : frames) {
        if (const auto& v = f.*field) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) {
        return std::nullopt;
    }
    return sum / static_cast<double>(n);
}

std::string cell(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string("undefined");
}

} // namespace

double brute_nearest(const Vec3& p, const std::vector<Vec3>& cloud) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : cloud) {
        best = std::min(best, dist2(p, q));
    }
    return std::sqrt(best);
}

std::vector<Vec3> masked_points(std::span<const float> xyz, std::span<const std::uint8_t> mask, const SE3& pose) {
    if (xyz.size() != mask.size() * 3) {
        throw ContractError("masked_points: points and mask sizes disagree");
    }
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] != 0) {
            out.push_back(pose.apply({xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]}));
        }
    }
    return out;
}

ChamferResult chamfer_acc_comp(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt, std::size_t sample_cap,
                               std::uint64_t seed) {
    if (sample_cap == 0) {
        throw ConfigError("chamfer sample cap must be >= 1");
    }
    if (pred.empty() || gt.empty()) {
        return {};
    }
    const auto p = stratified(pred, sample_cap, mix_seed(seed, 1));
    const auto g = stratified(gt, sample_cap, mix_seed(seed, 2));
    const KdTree gt_tree(g);
    const KdTree pred_tree(p);
    return {mean_nearest(p, gt_tree), mean_nearest(g, pred_tree)};
}

std::optional<DepthMetrics> ray_depth_metrics(std::span<const float> pred_points, std::span<const float> gt_points,
                                              std::span<const std::uint8_t> mask) {
    if (pred_points.size() != gt_points.size() || gt_points.size() != mask.size() * 3) {
        throw ContractError("ray_depth_metrics: shape mismatch");
    }
    double rel = 0.0;
    std::size_t inside = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] == 0) {
            continue;
        }
        const auto norm = [&](std::span<const float> p) {
            const double x = p[3 * i];
            const double y = p[3 * i + 1];
            const double z = p[3 * i + 2];
            return std::sqrt(x * x + y * y + z * z);
        };
        const double d_gt = norm(gt_points);
        const double d_pred = norm(pred_points);
        if (!(d_gt > 0.0)) {
            throw ContractError("ray_depth_metrics: non-positive GT depth on a valid pixel");
        }
        rel += std::abs(d_pred - d_gt) / d_gt;
        const double ratio = d_pred > 0.0 ? std::max(d_pred / d_gt, d_gt / d_pred) : std::numeric_limits<double>::infinity();
        if (ratio < 1.25) {
            ++inside;
        }
        ++n;
    }
    if (n == 0) {
        return std::nullopt;
    }
    return DepthMetrics{rel / static_cast<double>(n), static_cast<double>(inside) / static_cast<double>(n), n};
}

double auc_from_errors(std::span<const double> errors_deg, double max_threshold_deg, int steps) {
    if (steps < 1 || !(max_threshold_deg > 0.0)) {
        throw ConfigError("AUC grid needs steps >= 1 and a positive threshold");
    }
    if (errors_deg.empty()) {
        throw ContractError("AUC of an empty error list");
    }
    std::vector<double> sorted(errors_deg.begin(), errors_deg.end());
    std::sort(sorted.begin(), sorted.end());
    double total = 0.0;
    for (int i = 1; i <= steps; ++i) {
        const double tau = max_threshold_deg * i / steps;
        const auto below = std::upper_bound(sorted.begin(), sorted.end(), tau) - sorted.begin();
        total += static_cast<double>(below) / static_cast<double>(sorted.size());
    }
    return total / steps;
}

std::vector<double> pose_errors_deg(std::span<const SE3> pred_globals, std::span<const SE3> gt_globals,
                                    double deg_per_meter) {
    if (pred_globals.size() != gt_globals.size()) {
        throw ContractError("pose_errors_deg: sequences differ in length");
    }
    const auto pred = align_to_first(pred_globals);
    const auto gt = align_to_first(gt_globals);
    std::vector<double> out;
    for (std::size_t t = 1; t < pred.size(); ++t) {
        const auto e = pose_error(pred[t], gt[t]);
        out.push_back(std::max(e.rot_deg, e.trans_m * deg_per_meter));
    }
    return out;
}

std::optional<double> pose_auc(std::span<const SE3> pred_globals, std::span<const SE3> gt_globals,
                               const AucOptions& options) {
    const auto errors = pose_errors_deg(pred_globals, gt_globals, options.deg_per_meter);
    if (errors.empty()) {
        return std::nullopt;
    }
    return auc_from_errors(errors, options.max_threshold_deg, options.steps);
}

PlanningL2 planning_l2(const Trajectory& pred, const Trajectory& gt, int steps_per_second) {
    if (pred.size() != gt.size()) {
        throw ContractError("planning_l2: trajectories differ in length");
    }
    if (steps_per_second < 1) {
        throw ConfigError("planning_l2: steps_per_second must be >= 1");
    }
    PlanningL2 out;
    const std::size_t rate = static_cast<std::size_t>(steps_per_second);
    for (std::size_t lo = 0; lo < gt.size(); lo += rate) {
        const std::size_t hi = std::min(gt.size(), lo + rate);
        double sum = 0.0;
        for (std::size_t k = lo; k < hi; ++k) {
            sum += std::hypot(pred[k].x - gt[k].x, pred[k].y - gt[k].y);
        }
        out.by_second.push_back(sum / static_cast<double>(hi - lo));
    }
    if (!out.by_second.empty()) {
        out.average = std::accumulate(out.by_second.begin(), out.by_second.end(), 0.0) /
                      static_cast<double>(out.by_second.size());
    }
    return out;
}

MetricReport evaluate_sequence(std::span<const FramePrediction> preds, std::span<const GroundTruth> truths,
                               const EvalOptions& options) {
    if (preds.size() != truths.size()) {
        throw ContractError("evaluate_sequence: prediction and GT counts differ");
    }
    std::vector<SE3> pred_rel;
    std::vector<SE3> gt_rel;
    for (std::size_t t = 0; t < preds.size(); ++t) {
        pred_rel.push_back(preds[t].pose);
        gt_rel.push_back(truths[t].rel_pose);
    }
    const auto pred_globals = accumulate(pred_rel);
    const auto gt_globals = accumulate(gt_rel);

    MetricReport report;
    report.frames.resize(preds.size());
    const auto score = [&](std::size_t t) {
        const auto& p = preds[t];
        const auto& g = truths[t];
        FrameMetrics& f = report.frames[t];
        f.frame_index = p.frame_index;
        const auto pred_pts = masked_points(p.pointmaps.data(), g.valid_mask, pred_globals[t]);
        const auto gt_pts = masked_points(g.pointmaps.data(), g.valid_mask, gt_globals[t]);
        const auto ch = chamfer_acc_comp(pred_pts, gt_pts, options.sample_cap,
                                         mix_seed(options.seed, static_cast<std::uint64_t>(t)));
        f.acc = ch.acc;
        f.comp = ch.comp;
        if (const auto d = ray_depth_metrics(p.pointmaps.data(), g.pointmaps.data(), g.valid_mask)) {
            f.abs_rel = d->abs_rel;
            f.delta_125 = d->delta_125;
        }
        if (!g.future_traj.empty() && p.trajectory.size() == g.future_traj.size()) {
            f.l2_by_second = planning_l2(p.trajectory, g.future_traj, options.steps_per_second).by_second;
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, options.threads)), 1,
                                                         std::max<std::size_t>(1, preds.size()));
    if (workers == 1) {
        for (std::size_t t = 0; t < preds.size(); ++t) {
            score(t);
        }
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t t = w; t < preds.size(); t += workers) {
                    score(t);
                }
            });
        }
    }

    report.acc_m = mean_of(report.frames, &FrameMetrics::acc);
    report.comp_m = mean_of(report.frames, &FrameMetrics::comp);
    report.abs_rel = mean_of(report.frames, &FrameMetrics::abs_rel);
    report.delta_125 = mean_of(report.frames, &FrameMetrics::delta_125);
    report.pose_auc = pose_auc(pred_globals, gt_globals, options.auc);

    std::size_t counted = 0;
    for (const auto& f : report.frames) {
        if (f.l2_by_second.empty()) {
            continue;
        }
        if (report.l2_by_second.empty()) {
            report.l2_by_second.assign(f.l2_by_second.size(), 0.0);
        }
        if (f.l2_by_second.size() != report.l2_by_second.size()) {
            continue;
        }
        for (std::size_t s = 0; s < f.l2_by_second.size(); ++s) {
            report.l2_by_second[s] += f.l2_by_second[s];
        }
        ++counted;
    }
    if (counted > 0) {
        for (auto& v : report.l2_by_second) {
            v /= static_cast<double>(counted);
        }
        report.l2_avg = std::accumulate(report.l2_by_second.begin(), report.l2_by_second.end(), 0.0) /
                        static_cast<double>(report.l2_by_second.size());
    }
    return report;
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
    std::vector<std::string> header{"frame", "acc_m", "comp_m", "abs_rel", "delta_125"};
    for (std::size_t s = 0; s < l2_by_second.size(); ++s) {
        header.push_back("l2_" + std::to_string(s + 1) + "s");
    }
    header.push_back("l2_avg");
    CsvWriter csv(path, "metrics/1", header);
    for (const auto& f : frames) {
        std::vector<std::string> row{std::to_string(f.frame_index), cell(f.acc), cell(f.comp), cell(f.abs_rel),
                                     cell(f.delta_125)};
        double sum = 0.0;
        for (std::size_t s = 0; s < l2_by_second.size(); ++s) {
            const bool has = s < f.l2_by_second.size();
            row.push_back(has ? format_double(f.l2_by_second[s]) : "undefined");
            sum += has ? f.l2_by_second[s] : 0.0;
        }
        row.push_back(f.l2_by_second.empty() ? "undefined"
                                             : format_double(sum / static_cast<double>(f.l2_by_second.size())));
        csv.row(row);
    }
}

void MetricReport::write_summary_csv(const std::filesystem::path& path) const {
    std::vector<std::string> header{"frames", "acc_m", "comp_m", "abs_rel", "delta_125", "pose_auc"};
    for (std::size_t s = 0; s < l2_by_second.size(); ++s) {
        header.push_back("l2_" + std::to_string(s + 1) + "s");
    }
    header.push_back("l2_avg");
    CsvWriter csv(path, "metrics-summary/1", header);
    std::vector<std::string> summary{std::to_string(frames.size()), cell(acc_m), cell(comp_m), cell(abs_rel),
                                     cell(delta_125), cell(pose_auc)};
    for (double v : l2_by_second) {
        summary.push_back(format_double(v));
    }
    summary.push_back(cell(l2_avg));
    csv.row(summary);
}

void MetricReport::print(std::ostream& os) const {
    const auto show = [&](const char* name, const std::optional<double>& v) {
        os << "  " << std::left << std::setw(12) << name;
        if (v) {
            os << std::fixed << std::setprecision(4) << *v;
        } else {
            os << "undefined";
        }
        os << '\n';
    };
    os << "metrics over " << frames.size() << " frame(s)\n";
    show("Acc (m)", acc_m);
    show("Comp (m)", comp_m);
    show("Abs Rel", abs_rel);
    show("delta<1.25", delta_125);
    show("Pose AUC", pose_auc);
    for (std::size_t s = 0; s < l2_by_second.size(); ++s) {
        const std::string name = "L2 " + std::to_string(s + 1) + "s";
        show(name.c_str(), l2_by_second[s]);
    }
    show("L2 avg", l2_avg);
    os.unsetf(std::ios::floatfield);
}

} // namespace streamgeo
