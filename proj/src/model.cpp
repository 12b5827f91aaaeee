#include "streamgeo/model.hpp"

#include "streamgeo/errors.hpp"

#include <algorithm>
#include <limits>
#include <random>

namespace streamgeo {

AnchorSamples simulate_anchor_samples(int horizon, std::uint64_t seed) {
    AnchorSamples out;
    std::mt19937_64 rng(mix_seed(seed, hash_string("anchor-samples")));
    std::uniform_real_distribution<double> speed(0.0, 9.0);
    std::uniform_real_distribution<double> yaw(-20.0, 20.0);
    const TrackKind kinds[] = {TrackKind::Straight, TrackKind::Curve, TrackKind::Weave, TrackKind::Static};
    for (int i = 0; i < 32; ++i) {
        SceneConfig sc;
        sc.frames = 12;
        sc.horizon = horizon;
        sc.num_boxes = 1;
        sc.track = kinds[i % 4];
        sc.speed_mps = speed(rng);
        sc.yaw_rate_dps = yaw(rng);
        const Scene scene = generate_scene(rng(), sc);
        const auto& track = scene.ego_track;
        for (std::size_t t = 1; t < track.size(); ++t) {
            out.poses.push_back(compose(track[t - 1].inverse(), track[t]));
        }
        if (horizon > 0) {
            for (int t = 0; t < sc.frames; ++t) {
                out.trajectories.push_back(future_in_ego(track, t, horizon));
            }
        }
    }
    return out;
}

Model Model::create(const ModelConfig& config, const CameraRig& rig) {
    config.validate();
    Model m;
    m.config = config;
    m.rig = rig;
    const int n = config.tokens_per_view(rig.height, rig.width);
    m.encoder = EncoderParams::init(config);
    for (int b = 0; b < config.layers; ++b) {
        m.blocks.push_back(BlockParams::init(config, n, b));
    }
    m.point = PointHeadParams::init(config);
    m.pose_diffusion = DiffusionHeadParams::init(config, 7, "pose_head");

    const auto samples = simulate_anchor_samples(config.horizon, config.seed);
    m.pose_anchors = build_pose_anchors(samples.poses, config.anchors, mix_seed(config.seed, 11));
    if (config.horizon > 0) {
        m.traj_diffusion = DiffusionHeadParams::init(config, 3 * config.horizon, "traj_head");
        m.traj_anchors = build_traj_anchors(samples.trajectories, config.anchors, mix_seed(config.seed, 12));
    }
    return m;
}

TokenLayout Model::layout() const {
    return TokenLayout{rig.views(), config.patches_per_view(rig.height, rig.width), config.traj_tokens};
}

std::size_t Model::frame_cache_floats() const {
    // keys + values + snapshot, each tokens x d, per block
    return static_cast<std::size_t>(3) * tokens_per_frame() * config.dim * config.layers;
}

std::uint64_t Model::head_seed(std::int64_t t) const {
    return mix_seed(mix_seed(config.seed, hash_string("heads")), static_cast<std::uint64_t>(t));
}

FramePrediction Model::predict(const TokenSet& stack_tokens, std::int64_t t, FlopCounter* counter) const {
    FramePrediction p;
    p.frame_index = t;
    p.tokens = stack_tokens.tokens;
    p.pointmaps = camera_to_ego(point_head(stack_tokens, point, rig.height, rig.width, counter), rig);
    const auto seed = head_seed(t);
    auto pose = pose_head(stack_tokens.pose_tokens(), pose_anchors, pose_diffusion, mix_seed(seed, 1), counter);
    p.pose = pose.pose;
    p.pose_raw = std::move(pose.raw);
    if (config.horizon > 0) {
        auto traj = traj_head(stack_tokens.traj_tokens(), traj_anchors, traj_diffusion, mix_seed(seed, 2), counter);
        p.trajectory = std::move(traj.trajectory);
        p.traj_raw = std::move(traj.raw);
    }
    return p;
}

namespace flops {

namespace {

using u64 = std::uint64_t;

u64 diffusion_head(u64 d, u64 K, u64 mode_dim) {
    const u64 ctx = 1;
    u64 step = 2 * K * mode_dim * d;                         // in_proj
    step += 4 * (6 * K * d * d + 4 * K * K * d + 2 * K * d * d); // self-attention layers
    step += 2 * (2 * K * d * d + 4 * ctx * d * d + 4 * K * ctx * d + 2 * K * d * d); // cross-attention
    step += 2 * K * d * d + 2 * K * d * mode_dim;              // denoise MLP
    return 2 * step + 2 * K * d * d + 2 * K * d;               // two steps + score MLP
}

} // namespace

std::uint64_t encoder(const Model& m) {
    const auto lay = m.layout();
    const u64 d = static_cast<u64>(m.config.dim);
    const u64 pl = static_cast<u64>(m.config.patch) * m.config.patch * 3;
    return 2 * static_cast<u64>(lay.views) * lay.patches * pl * d + 2 * EgoStatus::kDims * d + 2 * d * d;
}

std::uint64_t block(const Model& m, std::size_t history_frames) {
    const auto lay = m.layout();
    const u64 d = static_cast<u64>(m.config.dim);
    const u64 n = static_cast<u64>(lay.total());
    const u64 nv = static_cast<u64>(lay.per_view());
    const u64 hidden = d * static_cast<u64>(m.config.mlp_ratio);
    const u64 proj = 8 * n * d * d; // q, k, v, out
    u64 f = 0;
    f += proj + static_cast<u64>(lay.views) * 4 * nv * nv * d;        // intra-view
    f += proj + 4 * n * n * d;                                        // cross-view
    f += proj + 4 * n * n * (static_cast<u64>(history_frames) + 1) * d; // temporal
    f += 4 * n * d * hidden;                                          // MLP
    return f;
}

std::uint64_t heads(const Model& m) {
    const auto lay = m.layout();
    const u64 d = static_cast<u64>(m.config.dim);
    const u64 pl = static_cast<u64>(m.config.patch) * m.config.patch * 3;
    u64 f = static_cast<u64>(lay.views) * lay.patches * (2 * d * d + 2 * d * pl);
    f += diffusion_head(d, static_cast<u64>(m.pose_anchors.count()), 7);
    if (m.config.horizon > 0) {
        f += diffusion_head(d, static_cast<u64>(m.traj_anchors.count()), 3 * static_cast<u64>(m.config.horizon));
    }
    return f;
}

std::uint64_t stream_frame(const Model& m, std::size_t history_frames) {
    return encoder(m) + static_cast<u64>(m.config.layers) * block(m, history_frames) + heads(m);
}

std::uint64_t batch_step(const Model& m, std::int64_t t, std::size_t window) {
    u64 total = heads(m);
    for (std::int64_t s = 0; s <= t; ++s) {
        const auto hist = std::min<std::size_t>(static_cast<std::size_t>(s), window);
        total += encoder(m) + static_cast<u64>(m.config.layers) * block(m, hist);
    }
    return total;
}

} // namespace flops

} // namespace streamgeo
