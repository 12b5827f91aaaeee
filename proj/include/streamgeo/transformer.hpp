#pragma once

#include "streamgeo/encoder.hpp"
#include "streamgeo/model_config.hpp"
#include "streamgeo/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace streamgeo {

// Pre-norm attention sublayer with QKNorm and LayerScale.
struct AttentionParams {
    Tensor norm_gain;   // [d]
    Tensor norm_bias;   // [d]
    Tensor wq, wk, wv;  // [d, d]
    Tensor wo;          // [d, d]
    Tensor q_norm_gain; // [d_h]
    Tensor k_norm_gain; // [d_h]
    Tensor layerscale;  // [d]
};

struct MlpParams {
    Tensor norm_gain; // [d]
    Tensor norm_bias; // [d]
    Tensor w1;        // [d, ratio*d]
    Tensor b1;        // [ratio*d]
    Tensor w2;        // [ratio*d, d]
    Tensor b2;        // [d]
    Tensor layerscale; // [d]
};

struct BlockParams {
    AttentionParams intra;
    AttentionParams cross;
    AttentionParams temporal;
    MlpParams mlp;
    // Additive per-slot embedding used by the intra- and cross-view sublayers.
    Tensor slot_embedding; // [tokens_per_view, d]

    static BlockParams init(const ModelConfig& config, int tokens_per_view, int block_index);
    // Forces every LayerScale vector to `value` (0 turns the block into identity).
    void set_layerscale(float value);
};

// Keys and values one frame contributes to temporal attention in one block,
// plus the block's input tokens at the temporal sublayer. Never modified
// after emission.
struct FrameKV {
    std::int64_t frame_index = 0;
    Tensor keys;     // [heads, tokens, d_h], normalized and rotated at frame_index
    Tensor values;   // [heads, tokens, d_h]
    Tensor snapshot; // [tokens, d]

    std::size_t float_count() const { return keys.size() + values.size() + snapshot.size(); }
    std::uint64_t hash() const;
};

struct BlockContext {
    const ModelConfig* config = nullptr;
    std::size_t window = std::numeric_limits<std::size_t>::max(); // max cache entries accepted
    FlopCounter* counter = nullptr;
};

struct BlockOutput {
    TokenSet tokens;
    FrameKV kv;
};

// Cache entries for one block, oldest first.
using BlockCacheView = std::vector<const FrameKV*>;

BlockOutput run_block(const TokenSet& tokens, const BlockCacheView& cache_view, const BlockParams& block,
                      std::int64_t t, const BlockContext& ctx);

struct StackOutput {
    TokenSet tokens;
    std::vector<FrameKV> kv; // one per block

    Tensor vis(int v) const { return tokens.patch_tokens(v); }
    Tensor pose() const { return tokens.pose_tokens(); }
    Tensor traj() const { return tokens.traj_tokens(); }
};

// cache_views[b] lists the cached frames for block b.
StackOutput run_stack(const TokenSet& tokens, const std::vector<BlockCacheView>& cache_views,
                      std::span<const BlockParams> params, std::int64_t t, const BlockContext& ctx);

// Sublayers, exposed so the joint (batch) driver can compose them with its own
// masked temporal attention.
namespace sublayer {

struct Projection {
    Tensor q; // [heads, n, d_h]
    Tensor k;
    Tensor v;
};

Tensor split_heads(const Tensor& x, int heads);
Tensor merge_heads(const Tensor& x);

// q/k/v of already-normalized input rows with QKNorm applied to q and k.
Projection project(const Tensor& normed, const AttentionParams& p, int heads, FlopCounter* counter);

// Softmax attention of q [h, n, dh] over k, v [h, m, dh].
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, FlopCounter* counter);

// x + layerscale * (merged_heads @ wo)
Tensor residual_out(const Tensor& x, const Tensor& heads_out, const AttentionParams& p, FlopCounter* counter);

Tensor intra_view(const Tensor& x, const BlockParams& b, const TokenLayout& layout, const ModelConfig& config,
                  FlopCounter* counter);
Tensor cross_view(const Tensor& x, const BlockParams& b, const TokenLayout& layout, const ModelConfig& config,
                  FlopCounter* counter);
Tensor mlp(const Tensor& x, const MlpParams& p, FlopCounter* counter);

// Temporal q/k/v for a frame at stream index `position`. `age` is how many
// frames the frame lies behind the query frame; only the additive encoding reads it.
Projection temporal_project(const Tensor& x, const BlockParams& b, std::int64_t position, std::int64_t age,
                            const ModelConfig& config, FlopCounter* counter);

Tensor sinusoid(std::int64_t age, int dim);

} // namespace sublayer

} // namespace streamgeo
