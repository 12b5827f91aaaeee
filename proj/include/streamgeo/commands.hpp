#pragma once

#include "streamgeo/io.hpp"
#include "streamgeo/metrics.hpp"
#include "streamgeo/model.hpp"
#include "streamgeo/model_config.hpp"
#include "streamgeo/scene.hpp"
#include "streamgeo/stream.hpp"

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace streamgeo {

enum class Paradigm { Batch, Full, Window };

std::string to_string(Paradigm p);
Paradigm paradigm_from_string(const std::string& s);

struct GtSubstitution {
    bool points = false;
    bool pose = false;
    bool traj = false;

    bool any() const { return points || pose || traj; }
    // Accepts none, all, or a comma list of points/pose/traj.
    static GtSubstitution parse(const std::string& s);
    std::string to_string() const;
};

void apply_substitution(const GtSubstitution& sub, FramePrediction& pred, const GroundTruth& truth);

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitInvariant = 3;

struct RunConfig {
    ModelConfig model;
    SceneConfig scene;
    std::uint64_t scene_seed = 1;
    std::size_t window = 4;
    Paradigm paradigm = Paradigm::Window;
    GtSubstitution substitute;
    std::vector<int> windows{2, 4, 6, 8};
    std::filesystem::path out = "out";
    int threads = 1;

    int frames() const { return scene.frames; }
    void validate() const;

    void write(KeyValueConfig& kv) const;
    static RunConfig read(const KeyValueConfig& kv);
    static RunConfig load(const std::filesystem::path& path);
};

// Worker count: hardware concurrency capped by STREAMGEO_THREADS when set.
int thread_budget();

// Scene, rendered frames and model shared by every command.
struct Workload {
    Scene scene;
    std::vector<FrameInput> inputs;
    std::vector<GroundTruth> truths;
    Model model;

    static Workload build(const RunConfig& config);
};

DriveResult run_paradigm(const Model& model, std::span<const FrameInput> frames, Paradigm paradigm,
                         std::size_t window);

struct PolyFit {
    std::vector<double> coefficients; // lowest degree first
    double r2 = 0.0;
};

// Least-squares polynomial fit. r2 is 1 when the data are fitted exactly.
PolyFit fit_polynomial(std::span<const double> x, std::span<const double> y, int degree);

struct BenchCheck {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct BenchSummary {
    CostLedger batch;
    CostLedger full;
    CostLedger window;
    std::vector<BenchCheck> checks;

    bool pass() const;
};

BenchSummary bench(const Model& model, std::span<const FrameInput> frames, std::size_t window);

struct AblationRow {
    std::size_t window = 0;
    MetricReport report;
};

std::vector<AblationRow> ablate_window(const Workload& work, const std::vector<int>& windows,
                                       const GtSubstitution& substitute, int threads);

int cmd_simulate(const RunConfig& config, std::ostream& log);
int cmd_stream(const RunConfig& config, std::ostream& log);
int cmd_bench(const RunConfig& config, std::ostream& log);
int cmd_equiv(const RunConfig& config, std::ostream& log);
int cmd_ablate_window(const RunConfig& config, std::ostream& log);

} // namespace streamgeo
