#pragma once

#include "streamgeo/model_config.hpp"
#include "streamgeo/scene.hpp"
#include "streamgeo/tensor.hpp"

namespace streamgeo {

// Per-view token layout: [patch tokens | 1 pose token | trajectory tokens].
struct TokenLayout {
    int views = 0;
    int patches = 0;
    int traj_tokens = 8;

    int per_view() const { return patches + 1 + traj_tokens; }
    int pose_offset() const { return patches; }
    int traj_offset() const { return patches + 1; }
    int total() const { return views * per_view(); }
};

// Tokens of one frame, shape [V, tokens_per_view, d].
struct TokenSet {
    Tensor tokens;
    TokenLayout layout;

    int dim() const { return static_cast<int>(tokens.dim(2)); }
    // All views flattened to [V * tokens_per_view, d].
    Tensor flat() const;
    static TokenSet from_flat(const Tensor& flat, const TokenLayout& layout);

    Tensor view_tokens(int v) const;               // [tokens_per_view, d]
    Tensor patch_tokens(int v) const;              // [patches, d]
    Tensor pose_tokens() const;                    // [V, d]
    Tensor traj_tokens() const;                    // [V * traj_tokens, d]

    bool operator==(const TokenSet& other) const { return tokens == other.tokens; }
};

struct EncoderParams {
    Tensor patch_projection; // [patch*patch*3, d]
    Tensor pose_seed;        // [d]
    Tensor traj_seeds;       // [traj_tokens, d]
    Tensor status_w1;        // [7, d]
    Tensor status_b1;        // [d]
    Tensor status_w2;        // [d, d]
    Tensor status_b2;        // [d]

    static EncoderParams init(const ModelConfig& config);
};

// Status MLP output for one ego-status vector, shape [d].
Tensor status_embedding(const EgoStatus& status, const EncoderParams& params, FlopCounter* counter = nullptr);

TokenSet encode(const FrameInput& frame, const EncoderParams& params, const ModelConfig& config,
                FlopCounter* counter = nullptr);

} // namespace streamgeo
