#pragma once

#include "streamgeo/encoder.hpp"
#include "streamgeo/heads.hpp"
#include "streamgeo/model_config.hpp"
#include "streamgeo/scene.hpp"
#include "streamgeo/transformer.hpp"

#include <cstdint>
#include <vector>

namespace streamgeo {

struct FramePrediction {
    std::int64_t frame_index = 0;
    Tensor tokens;    // final stack tokens [V, tokens_per_view, d]
    Tensor pointmaps; // [V, H, W, 3], current ego frame
    SE3 pose;         // previous ego -> current ego
    Trajectory trajectory;
    DiffusionResult pose_raw;
    DiffusionResult traj_raw;
};

// Everything needed to run one stream: parameters are frozen after create().
struct Model {
    ModelConfig config;
    CameraRig rig;
    EncoderParams encoder;
    std::vector<BlockParams> blocks;
    PointHeadParams point;
    DiffusionHeadParams pose_diffusion;
    DiffusionHeadParams traj_diffusion;
    AnchorSet pose_anchors;
    AnchorSet traj_anchors;

    // Anchors are clustered from simulated ego tracks (seeded by config.seed).
    static Model create(const ModelConfig& config, const CameraRig& rig);

    TokenLayout layout() const;
    int tokens_per_frame() const { return layout().total(); }
    // Floats one frame occupies in the cache across all blocks.
    std::size_t frame_cache_floats() const;

    // Seed for the diffusion heads of frame t; identical across paradigms.
    std::uint64_t head_seed(std::int64_t t) const;

    // Heads on the final stack tokens of frame t.
    FramePrediction predict(const TokenSet& stack_tokens, std::int64_t t, FlopCounter* counter = nullptr) const;
};

// Samples used for anchor clustering: ego relative poses and future trajectories
// from a fixed family of simulated tracks.
struct AnchorSamples {
    std::vector<SE3> poses;
    std::vector<Trajectory> trajectories;
};
AnchorSamples simulate_anchor_samples(int horizon, std::uint64_t seed);

// Closed-form FLOP counts, independent of the counters threaded through kernels.
namespace flops {

std::uint64_t encoder(const Model& m);
std::uint64_t block(const Model& m, std::size_t history_frames);
std::uint64_t heads(const Model& m);
// One streaming step attending to `history_frames` cached frames.
std::uint64_t stream_frame(const Model& m, std::size_t history_frames);
// One batch step at stream index t: recompute frames 0..t jointly. `window`
// bounds how far back each frame attends (SIZE_MAX for plain causal).
std::uint64_t batch_step(const Model& m, std::int64_t t, std::size_t window);

} // namespace flops

} // namespace streamgeo
