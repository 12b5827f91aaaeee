#include "streamgeo/commands.hpp"

#include "streamgeo/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iomanip>
#include <sstream>
#include <thread>

namespace streamgeo {

namespace {

std::string frame_name(std::size_t t, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%04zu.%s", t, ext);
    return buf;
}

void write_pose_traj_csv(const std::filesystem::path& path, const std::string& schema, std::size_t horizon,
                         const std::vector<SE3>& poses, const std::vector<Trajectory>& trajs) {
    std::vector<std::string> header{"frame", "tx", "ty", "tz", "qw", "qx", "qy", "qz"};
    for (std::size_t k = 1; k <= horizon; ++k) {
        header.push_back("x" + std::to_string(k));
        header.push_back("y" + std::to_string(k));
        header.push_back("yaw" + std::to_string(k));
    }
    CsvWriter csv(path, schema, header);
    for (std::size_t t = 0; t < poses.size(); ++t) {
        std::vector<std::string> row{std::to_string(t)};
        for (double v : poses[t].to_vector()) {
            row.push_back(format_double(v));
        }
        for (std::size_t k = 0; k < horizon; ++k) {
            const bool has = k < trajs[t].size();
            row.push_back(has ? format_double(trajs[t][k].x) : "undefined");
            row.push_back(has ? format_double(trajs[t][k].y) : "undefined");
            row.push_back(has ? format_double(trajs[t][k].yaw) : "undefined");
        }
        csv.row(row);
    }
}

PointmapDump make_dump(const Tensor& points, const std::vector<std::uint8_t>& mask) {
    return PointmapDump{points, mask};
}

std::size_t count_mismatches(const CostLedger& ledger, const auto& expected) {
    std::size_t bad = 0;
    for (const auto& r : ledger.rows) {
        if (r.flops != expected(r.frame_index)) {
            ++bad;
        }
    }
    return bad;
}

void write_checks(const std::filesystem::path& path, const std::vector<BenchCheck>& checks) {
    CsvWriter csv(path, "bench-summary/1", {"check", "value", "threshold", "pass"});
    for (const auto& c : checks) {
        csv.row({c.name, format_double(c.value), format_double(c.threshold), c.pass ? "true" : "false"});
    }
}

void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
    }
}

} // namespace

std::string to_string(Paradigm p) {
    switch (p) {
    case Paradigm::Batch:
        return "batch";
    case Paradigm::Full:
        return "full";
    case Paradigm::Window:
        return "window";
    }
    return "window";
}

Paradigm paradigm_from_string(const std::string& s) {
    if (s == "batch") {
        return Paradigm::Batch;
    }
    if (s == "full") {
        return Paradigm::Full;
    }
    if (s == "window") {
        return Paradigm::Window;
    }
    throw ConfigError("unknown paradigm '" + s + "' (expected batch, full or window)");
}

GtSubstitution GtSubstitution::parse(const std::string& s) {
    GtSubstitution out;
    if (s.empty() || s == "none") {
        return out;
    }
    if (s == "all") {
        return {true, true, true};
    }
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "points") {
            out.points = true;
        } else if (item == "pose") {
            out.pose = true;
        } else if (item == "traj") {
            out.traj = true;
        } else {
            throw ConfigError("unknown GT substitution '" + item + "' (expected points, pose, traj or none)");
        }
    }
    return out;
}

std::string GtSubstitution::to_string() const {
    std::vector<std::string> parts;
    if (points) {
        parts.emplace_back("points");
    }
    if (pose) {
        parts.emplace_back("pose");
    }
    if (traj) {
        parts.emplace_back("traj");
    }
    if (parts.empty()) {
        return "none";
    }
    std::string out = parts[0];
    for (std::size_t i = 1; i < parts.size(); ++i) {
        out += "," + parts[i];
    }
    return out;
}

void apply_substitution(const GtSubstitution& sub, FramePrediction& pred, const GroundTruth& truth) {
    if (sub.points) {
        pred.pointmaps = truth.pointmaps;
    }
    if (sub.pose) {
        pred.pose = truth.rel_pose;
    }
    if (sub.traj) {
        pred.trajectory = truth.future_traj;
    }
}

void RunConfig::validate() const {
    model.validate();
    scene.validate();
    if (window < 1) {
        throw ConfigError("window must be >= 1");
    }
    if (scene.frames < 1) {
        throw ConfigError("frames must be >= 1");
    }
    if (scene.horizon != model.horizon) {
        throw ConfigError("scene.horizon (" + std::to_string(scene.horizon) + ") must equal model.horizon (" +
                          std::to_string(model.horizon) + ")");
    }
    model.patches_per_view(scene.height, scene.width);
    for (int w : windows) {
        if (w < 1) {
            throw ConfigError("ablation windows must be >= 1");
        }
    }
    if (threads < 1) {
        throw ConfigError("threads must be >= 1");
    }
}

void RunConfig::write(KeyValueConfig& kv) const {
    kv.set("run.seed", static_cast<std::int64_t>(scene_seed));
    kv.set("run.window", static_cast<std::int64_t>(window));
    kv.set("run.paradigm", to_string(paradigm));
    kv.set("run.gt_substitute", substitute.to_string());
    std::vector<double> ws(windows.begin(), windows.end());
    kv.set("run.windows", ws);
    kv.set("run.out", out.string());
    model.write(kv);
    scene.write(kv);
}

RunConfig RunConfig::read(const KeyValueConfig& kv) {
    RunConfig c;
    c.scene_seed = static_cast<std::uint64_t>(kv.get_int("run.seed", static_cast<std::int64_t>(c.scene_seed)));
    const auto w = kv.get_int("run.window", static_cast<std::int64_t>(c.window));
    if (w < 1) {
        throw ConfigError("run.window must be >= 1");
    }
    c.window = static_cast<std::size_t>(w);
    c.paradigm = paradigm_from_string(kv.get_string("run.paradigm", to_string(c.paradigm)));
    c.substitute = GtSubstitution::parse(kv.get_string("run.gt_substitute", "none"));
    if (kv.contains("run.windows")) {
        c.windows.clear();
        for (double v : kv.get_doubles("run.windows")) {
            c.windows.push_back(static_cast<int>(v));
        }
    }
    c.out = kv.get_string("run.out", c.out.string());
    c.model = ModelConfig::read(kv);
    c.scene = SceneConfig::read(kv);
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    return read(KeyValueConfig::load(path));
}

int thread_budget() {
    int n = static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
    if (const char* env = std::getenv("STREAMGEO_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || cap < 1) {
            throw ConfigError(std::string("STREAMGEO_THREADS must be a positive integer, got '") + env + "'");
        }
        n = std::min<int>(n, static_cast<int>(cap));
    }
    return n;
}

Workload Workload::build(const RunConfig& config) {
    config.validate();
    Workload w;
    w.scene = generate_scene(config.scene_seed, config.scene);
    auto rendered = render_sequence(w.scene, config.scene.frames, config.threads);
    for (auto& r : rendered) {
        w.inputs.push_back(std::move(r.input));
        w.truths.push_back(std::move(r.truth));
    }
    w.model = Model::create(config.model, w.scene.rig);
    return w;
}

DriveResult run_paradigm(const Model& model, std::span<const FrameInput> frames, Paradigm paradigm,
                         std::size_t window) {
    switch (paradigm) {
    case Paradigm::Batch:
        return drive_batch(model, frames);
    case Paradigm::Full:
        return drive_fullhistory(model, frames);
    case Paradigm::Window:
        return drive_windowed(model, frames, window);
    }
    throw ConfigError("unknown paradigm");
}

PolyFit fit_polynomial(std::span<const double> x, std::span<const double> y, int degree) {
    if (x.size() != y.size() || degree < 0 || x.size() < static_cast<std::size_t>(degree) + 1) {
        throw ContractError("fit_polynomial: need at least degree + 1 matching samples");
    }
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd a(n, degree + 1);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double p = 1.0;
        for (int j = 0; j <= degree; ++j) {
            a(i, j) = p;
            p *= x[static_cast<std::size_t>(i)];
        }
        b(i) = y[static_cast<std::size_t>(i)];
    }
    const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(b);
    const Eigen::VectorXd residual = b - a * coef;
    const double mean = b.mean();
    const double ss_res = residual.squaredNorm();
    const double ss_tot = (b.array() - mean).square().sum();
    PolyFit fit;
    fit.coefficients.assign(coef.data(), coef.data() + coef.size());
    if (ss_tot == 0.0) {
        fit.r2 = ss_res <= 1e-12 * std::max(1.0, mean * mean) ? 1.0 : 0.0;
    } else {
        fit.r2 = 1.0 - ss_res / ss_tot;
    }
    return fit;
}

bool BenchSummary::pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const BenchCheck& c) { return c.pass; });
}

BenchSummary bench(const Model& model, std::span<const FrameInput> frames, std::size_t window) {
    BenchSummary s;
    s.window = drive_windowed(model, frames, window).ledger;
    s.full = drive_fullhistory(model, frames).ledger;
    s.batch = drive_batch(model, frames).ledger;
    const std::size_t T = frames.size();

    const auto exact = [&](const std::string& name, double mismatches) {
        s.checks.push_back({name, mismatches, 0.0, mismatches == 0.0});
    };
    exact("window_counter_equals_closed_form",
          static_cast<double>(count_mismatches(s.window, [&](std::int64_t t) {
              return flops::stream_frame(model, std::min<std::size_t>(static_cast<std::size_t>(t), window));
          })));
    exact("full_counter_equals_closed_form", static_cast<double>(count_mismatches(s.full, [&](std::int64_t t) {
              return flops::stream_frame(model, static_cast<std::size_t>(t));
          })));
    exact("batch_counter_equals_closed_form", static_cast<double>(count_mismatches(s.batch, [&](std::int64_t t) {
              return flops::batch_step(model, t, kUnbounded);
          })));

    double flat = 0.0;
    for (std::size_t t = window; t < T; ++t) {
        flat = std::max(flat, std::abs(static_cast<double>(s.window.rows[t].flops) -
                                       static_cast<double>(s.window.rows[window].flops)));
    }
    exact("window_flops_constant_for_t_ge_W", flat);

    double mem = 0.0;
    for (std::size_t t = std::min(window, T) - 1; t < T; ++t) {
        mem = std::max(mem, std::abs(static_cast<double>(s.window.rows[t].peak_cache_elements) -
                                     static_cast<double>(s.window.rows[std::min(window, T) - 1].peak_cache_elements)));
    }
    exact("window_peak_cache_constant", mem);

    double diff = 0.0;
    for (std::size_t t = 2; t < T; ++t) {
        const double d0 = static_cast<double>(s.full.rows[1].flops) - static_cast<double>(s.full.rows[0].flops);
        const double dt = static_cast<double>(s.full.rows[t].flops) - static_cast<double>(s.full.rows[t - 1].flops);
        diff = std::max(diff, std::abs(dt - d0));
    }
    exact("full_flops_first_differences_constant", diff);

    if (T >= 3) {
        std::vector<double> x;
        std::vector<double> y;
        for (std::size_t t = 0; t < T; ++t) {
            x.push_back(static_cast<double>(t));
            y.push_back(static_cast<double>(s.full.rows[t].flops));
        }
        const auto fit = fit_polynomial(x, y, 1);
        s.checks.push_back({"full_flops_affine_r2", fit.r2, 0.99, fit.r2 >= 0.99});
    }
    if (T >= 4) {
        std::vector<double> x;
        std::vector<double> y;
        for (std::size_t n = 2; n <= T; ++n) {
            x.push_back(static_cast<double>(n));
            y.push_back(static_cast<double>(s.batch.cumulative_flops(n)));
        }
        const auto fit = fit_polynomial(x, y, 2);
        s.checks.push_back({"batch_cumulative_quadratic_r2", fit.r2, 0.99, fit.r2 >= 0.99});
    }
    if (T >= 16) {
        const double ratio =
            static_cast<double>(s.batch.cumulative_flops(16)) / static_cast<double>(s.batch.cumulative_flops(8));
        s.checks.push_back({"batch_cumulative_ratio_16_over_8", ratio, 3.2, ratio >= 3.2 && ratio <= 4.8});
    }
    return s;
}

std::vector<AblationRow> ablate_window(const Workload& work, const std::vector<int>& windows,
                                       const GtSubstitution& substitute, int threads) {
    std::vector<AblationRow> rows;
    for (int w : windows) {
        if (w < 1) {
            throw ConfigError("ablation windows must be >= 1");
        }
        auto run = drive_windowed(work.model, work.inputs, static_cast<std::size_t>(w));
        for (std::size_t t = 0; t < run.predictions.size(); ++t) {
            apply_substitution(substitute, run.predictions[t], work.truths[t]);
        }
        EvalOptions opts;
        opts.threads = threads;
        rows.push_back({static_cast<std::size_t>(w), evaluate_sequence(run.predictions, work.truths, opts)});
    }
    return rows;
}

int cmd_simulate(const RunConfig& config, std::ostream& log) {
    config.validate();
    ensure_dir(config.out / "gt");
    const Scene scene = generate_scene(config.scene_seed, config.scene);
    scene.to_config().save(config.out / "scene.cfg");
    const auto frames = render_sequence(scene, config.scene.frames, config.threads);
    std::vector<SE3> poses;
    std::vector<Trajectory> trajs;
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const auto& gt = frames[t].truth;
        write_pointmap(config.out / "gt" / frame_name(t, "sgpm"), make_dump(gt.pointmaps, gt.valid_mask));
        poses.push_back(gt.rel_pose);
        trajs.push_back(gt.future_traj);
    }
    write_pose_traj_csv(config.out / "gt" / "poses.csv", "gt-poses/1", static_cast<std::size_t>(config.scene.horizon),
                        poses, trajs);
    log << "simulated " << frames.size() << " frame(s), " << scene.boxes.size() << " box(es) -> "
        << config.out.string() << '\n';
    return kExitOk;
}

int cmd_stream(const RunConfig& config, std::ostream& log) {
    const Workload work = Workload::build(config);
    ensure_dir(config.out / "pred");
    auto run = run_paradigm(work.model, work.inputs, config.paradigm, config.window);
    std::vector<SE3> poses;
    std::vector<Trajectory> trajs;
    for (std::size_t t = 0; t < run.predictions.size(); ++t) {
        auto& p = run.predictions[t];
        apply_substitution(config.substitute, p, work.truths[t]);
        write_pointmap(config.out / "pred" / frame_name(t, "sgpm"), make_dump(p.pointmaps, work.truths[t].valid_mask));
        poses.push_back(p.pose);
        trajs.push_back(p.trajectory);
    }
    write_pose_traj_csv(config.out / "predictions.csv", "predictions/1",
                        static_cast<std::size_t>(config.model.horizon), poses, trajs);
    run.ledger.write_csv(config.out / "ledger.csv");
    EvalOptions opts;
    opts.threads = config.threads;
    const auto report = evaluate_sequence(run.predictions, work.truths, opts);
    report.write_csv(config.out / "metrics.csv");
    report.write_summary_csv(config.out / "metrics_summary.csv");
    log << "paradigm " << to_string(config.paradigm);
    if (config.paradigm == Paradigm::Window) {
        log << " (W=" << config.window << ")";
    }
    log << ", gt substitution: " << config.substitute.to_string() << '\n';
    report.print(log);
    return kExitOk;
}

int cmd_bench(const RunConfig& config, std::ostream& log) {
    const Workload work = Workload::build(config);
    ensure_dir(config.out);
    const auto s = bench(work.model, work.inputs, config.window);
    s.batch.write_csv(config.out / "ledger_batch.csv");
    s.full.write_csv(config.out / "ledger_full.csv");
    s.window.write_csv(config.out / "ledger_window.csv");
    write_checks(config.out / "bench_summary.csv", s.checks);
    for (const auto& c : s.checks) {
        log << (c.pass ? "PASS " : "FAIL ") << std::left << std::setw(40) << c.name << " value=" << c.value
            << " threshold=" << c.threshold << '\n';
    }
    return s.pass() ? kExitOk : kExitInvariant;
}

int cmd_equiv(const RunConfig& config, std::ostream& log) {
    const Workload work = Workload::build(config);
    const auto report = check_equivalence(work.model, work.inputs, config.window);
    log << "W=" << config.window << " T=" << config.frames() << " encoding="
        << (config.model.encoding == TemporalEncoding::Rotary ? "rotary" : "absolute") << '\n';
    log << format_report(report);
    return report.pass ? kExitOk : kExitInvariant;
}

int cmd_ablate_window(const RunConfig& config, std::ostream& log) {
    const Workload work = Workload::build(config);
    ensure_dir(config.out);
    const auto rows = ablate_window(work, config.windows, config.substitute, config.threads);
    CsvWriter csv(config.out / "ablation_window.csv", "ablation-window/1",
                  {"W", "acc_m", "comp_m", "abs_rel", "delta_125", "pose_auc", "l2_avg"});
    const auto cell = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("undefined"); };
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    const auto shown = [](const std::optional<double>& v) {
        std::ostringstream os;
        if (v) {
            os << std::fixed << std::setprecision(4) << *v;
        } else {
            os << "undefined";
        }
        return os.str();
    };
    log << std::left << std::setw(6) << "W" << std::setw(12) << "Acc" << std::setw(12) << "AbsRel" << '\n';
    for (const auto& r : rows) {
        csv.row({std::to_string(r.window), cell(r.report.acc_m), cell(r.report.comp_m), cell(r.report.abs_rel),
                 cell(r.report.delta_125), cell(r.report.pose_auc), cell(r.report.l2_avg)});
        log << std::setw(6) << r.window << std::setw(12) << shown(r.report.acc_m) << std::setw(12)
            << shown(r.report.abs_rel) << '\n';
        if (r.report.abs_rel) {
            lo = std::min(lo, *r.report.abs_rel);
            hi = std::max(hi, *r.report.abs_rel);
        }
    }
    if (config.substitute.points && !rows.empty()) {
        const double spread = hi - lo;
        const bool ok = spread <= 1e-6;
        log << (ok ? "PASS" : "FAIL") << " Abs Rel spread across W = " << spread << " (limit 1e-6)\n";
        return ok ? kExitOk : kExitInvariant;
    }
    log << "Abs Rel spread across W = " << (rows.empty() ? 0.0 : hi - lo)
        << " (asserted only with --gt-substitute points)\n";
    return kExitOk;
}

} // namespace streamgeo
