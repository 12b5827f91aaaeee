#include "streamgeo/commands.hpp"
#include "streamgeo/errors.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

using namespace streamgeo;

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> paradigm;
    std::optional<std::size_t> window;
    std::optional<int> frames;
    std::optional<std::string> gt_substitute;
    bool negative_control = false;
    std::vector<int> windows;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "key=value run config file");
    cmd->add_option("--seed", f.seed, "scene seed");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--paradigm", f.paradigm, "batch, full or window")
        ->check(CLI::IsMember({"batch", "full", "window"}));
    cmd->add_option("--window", f.window, "cache window W")->check(CLI::PositiveNumber);
    cmd->add_option("--frames", f.frames, "stream length T")->check(CLI::PositiveNumber);
    cmd->add_option("--gt-substitute", f.gt_substitute, "points, pose, traj, all or none (comma list allowed)");
    cmd->add_flag("--negative-control-encoding", f.negative_control,
                  "absolute additive temporal encoding instead of rotary");
}

RunConfig resolve(const Flags& f) {
    RunConfig c = f.config.empty() ? RunConfig{} : RunConfig::load(f.config);
    if (f.seed) {
        c.scene_seed = *f.seed;
    }
    if (f.out) {
        c.out = *f.out;
    }
    if (f.paradigm) {
        c.paradigm = paradigm_from_string(*f.paradigm);
    }
    if (f.window) {
        c.window = *f.window;
    }
    if (f.frames) {
        c.scene.frames = *f.frames;
    }
    if (f.gt_substitute) {
        c.substitute = GtSubstitution::parse(*f.gt_substitute);
    }
    if (f.negative_control) {
        c.model.encoding = TemporalEncoding::AbsoluteAdditive;
    }
    if (!f.windows.empty()) {
        c.windows = f.windows;
    }
    c.threads = thread_budget();
    c.validate();
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"streamgeo: streaming multi-view geometry transformer with a sliding-window cache"};
    app.require_subcommand(1);
    Flags flags;

    auto* simulate = app.add_subcommand("simulate", "generate a scene and write GT dumps");
    auto* stream = app.add_subcommand("stream", "run one paradigm end to end and score it");
    auto* bench = app.add_subcommand("bench", "FLOP/memory ledgers for batch, full-history and windowed inference");
    auto* equiv = app.add_subcommand("equiv", "windowed streaming vs window-masked joint processing");
    auto* ablate = app.add_subcommand("ablate-window", "metrics for several window sizes on one scene");
    for (auto* cmd : {simulate, stream, bench, equiv, ablate}) {
        add_common(cmd, flags);
    }
    ablate->add_option("--windows", flags.windows, "window sizes to compare")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        const RunConfig config = resolve(flags);
        if (simulate->parsed()) {
            return cmd_simulate(config, std::cout);
        }
        if (stream->parsed()) {
            return cmd_stream(config, std::cout);
        }
        if (bench->parsed()) {
            return cmd_bench(config, std::cout);
        }
        if (equiv->parsed()) {
            return cmd_equiv(config, std::cout);
        }
        return cmd_ablate_window(config, std::cout);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const BoundsError& e) {
        std::cerr << "bounds error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvariant;
    }
}
