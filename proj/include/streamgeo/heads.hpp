#pragma once

#include "streamgeo/encoder.hpp"
#include "streamgeo/io.hpp"
#include "streamgeo/model_config.hpp"
#include "streamgeo/pose.hpp"
#include "streamgeo/scene.hpp"
#include "streamgeo/tensor.hpp"
#include "streamgeo/transformer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace streamgeo {

// ---------------------------------------------------------------------------
// Dense point head
// ---------------------------------------------------------------------------

struct PointHeadParams {
    int patch = 16;
    Tensor w1; // [d, d]
    Tensor b1; // [d]
    Tensor w2; // [d, patch*patch*3]
    Tensor b2; // [patch*patch*3], the per-patch "bias image"

    static PointHeadParams init(const ModelConfig& config);
};

// Decodes every patch token into a patch*patch*3 block, tiles the blocks,
// smooths each channel with a normalized 3x3 kernel (edges clamped) and maps
// the third channel through exp. Output is [V, H, W, 3] in each camera's frame.
Tensor point_head(const TokenSet& tokens, const PointHeadParams& params, int height, int width,
                  FlopCounter* counter = nullptr);

// Camera-frame pointmaps to the ego frame using the rig extrinsics.
Tensor camera_to_ego(const Tensor& camera_points, const CameraRig& rig);

// ---------------------------------------------------------------------------
// Anchors
// ---------------------------------------------------------------------------

struct AnchorSet {
    std::string kind;  // "pose" or "traj"
    Tensor modes;      // [K, mode_dim]

    int count() const { return modes.empty() ? 0 : static_cast<int>(modes.dim(0)); }
    int mode_dim() const { return modes.empty() ? 0 : static_cast<int>(modes.dim(1)); }

    KeyValueConfig to_config() const;
    static AnchorSet from_config(const KeyValueConfig& kv);
};

struct KMeansResult {
    std::vector<std::vector<double>> centroids;
    std::vector<int> assignment;
    std::vector<double> radius; // max member distance per cluster
    double max_radius = 0.0;
};

// Lloyd's algorithm with k-means++ seeding. Empty clusters keep their centroid.
KMeansResult kmeans(const std::vector<std::vector<double>>& samples, int k, int iterations, std::uint64_t seed);

// Pose samples are (tx, ty, tz, qw, qx, qy, qz); centroid quaternions are renormalized.
AnchorSet build_pose_anchors(const std::vector<SE3>& samples, int k, std::uint64_t seed, int iterations = 50);
AnchorSet build_traj_anchors(const std::vector<Trajectory>& samples, int k, std::uint64_t seed, int iterations = 50);

// ---------------------------------------------------------------------------
// Anchor-based truncated diffusion
// ---------------------------------------------------------------------------

struct DiffusionHeadParams {
    int mode_dim = 0;
    int heads = 4;
    double sigma_high = 0.5;
    double sigma_low = 0.1;
    float delta_bound = 1.0F; // max |component| of a denoiser correction

    Tensor in_proj;     // [mode_dim, d]
    Tensor in_bias;     // [d]
    Tensor sigma_embed; // [d]
    std::vector<AttentionParams> self_layers;  // 4
    std::vector<AttentionParams> cross_layers; // 2
    Tensor denoise_w1, denoise_b1; // [d, d], [d]
    Tensor denoise_w2, denoise_b2; // [d, mode_dim], [mode_dim]
    Tensor score_w1, score_b1;     // [d, d], [d]
    Tensor score_w2, score_b2;     // [d, 1], [1]

    static DiffusionHeadParams init(const ModelConfig& config, int mode_dim, const std::string& tag);
    void zero_denoiser();
    void zero_schedule() { sigma_high = 0.0; sigma_low = 0.0; }
};

struct DiffusionResult {
    std::vector<float> selected;
    std::vector<float> scores;
    int index = 0;
    double refinement = 0.0; // |selected - its anchor|
    double total_refinement = 0.0; // |correction 1| + |correction 2| for the selected mode
};

// Each anchor is noised at sigma_high and denoised, re-noised at sigma_low and
// denoised again; the score MLP ranks the K refined modes and the first
// maximum wins. The denoiser predicts a bounded correction to the anchor.
DiffusionResult diffusion_decode(const Tensor& context, const AnchorSet& anchors, const DiffusionHeadParams& params,
                                 std::uint64_t rng_seed, FlopCounter* counter = nullptr);

struct PoseHeadOutput {
    SE3 pose;
    DiffusionResult raw;
};

struct TrajHeadOutput {
    Trajectory trajectory;
    DiffusionResult raw;
};

// pose_tokens [V, d] are mean-pooled across views.
PoseHeadOutput pose_head(const Tensor& pose_tokens, const AnchorSet& anchors, const DiffusionHeadParams& params,
                         std::uint64_t seed, FlopCounter* counter = nullptr);
// traj_tokens [V * k, d] are mean-pooled across views and trajectory tokens.
TrajHeadOutput traj_head(const Tensor& traj_tokens, const AnchorSet& anchors, const DiffusionHeadParams& params,
                         std::uint64_t seed, FlopCounter* counter = nullptr);

Tensor mean_rows(const Tensor& x);

} // namespace streamgeo
