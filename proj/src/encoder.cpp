#include "streamgeo/encoder.hpp"

#include "streamgeo/errors.hpp"

#include <cmath>
#include <cstring>

namespace streamgeo {

Tensor TokenSet::flat() const {
    return tokens.reshaped({layout.total(), tokens.dim(2)});
}

TokenSet TokenSet::from_flat(const Tensor& flat, const TokenLayout& layout) {
    if (flat.rank() != 2 || flat.dim(0) != layout.total()) {
        throw ContractError("token tensor " + flat.shape_string() + " does not match layout");
    }
    return TokenSet{flat.reshaped({layout.views, layout.per_view(), flat.dim(1)}), layout};
}

Tensor TokenSet::view_tokens(int v) const {
    const auto n = layout.per_view();
    const auto d = tokens.dim(2);
    Tensor out({n, d});
    std::memcpy(out.raw(), tokens.raw() + static_cast<std::size_t>(v) * n * d, sizeof(float) * n * d);
    return out;
}

Tensor TokenSet::patch_tokens(int v) const {
    const auto d = tokens.dim(2);
    Tensor out({layout.patches, d});
    std::memcpy(out.raw(), tokens.raw() + static_cast<std::size_t>(v) * layout.per_view() * d,
                sizeof(float) * layout.patches * d);
    return out;
}

Tensor TokenSet::pose_tokens() const {
    const auto d = tokens.dim(2);
    Tensor out({layout.views, d});
    for (int v = 0; v < layout.views; ++v) {
        const float* src = tokens.raw() + (static_cast<std::size_t>(v) * layout.per_view() + layout.pose_offset()) * d;
        std::memcpy(out.raw() + static_cast<std::size_t>(v) * d, src, sizeof(float) * d);
    }
    return out;
}

Tensor TokenSet::traj_tokens() const {
    const auto d = tokens.dim(2);
    const auto k = layout.traj_tokens;
    Tensor out({static_cast<std::int64_t>(layout.views) * k, d});
    for (int v = 0; v < layout.views; ++v) {
        const float* src = tokens.raw() + (static_cast<std::size_t>(v) * layout.per_view() + layout.traj_offset()) * d;
        std::memcpy(out.raw() + static_cast<std::size_t>(v) * k * d, src, sizeof(float) * k * d);
    }
    return out;
}

EncoderParams EncoderParams::init(const ModelConfig& config) {
    config.validate();
    const std::int64_t d = config.dim;
    const std::int64_t patch_len = static_cast<std::int64_t>(config.patch) * config.patch * 3;
    EncoderParams p;
    p.patch_projection = ParamInit(config.seed, "encoder.patch")
                             .normal({patch_len, d}, 1.0F / std::sqrt(static_cast<float>(patch_len)));
    p.pose_seed = ParamInit(config.seed, "encoder.pose_seed").normal({d}, 0.5F);
    p.traj_seeds = ParamInit(config.seed, "encoder.traj_seeds").normal({config.traj_tokens, d}, 0.5F);
    p.status_w1 = ParamInit(config.seed, "encoder.status_w1").normal({EgoStatus::kDims, d}, 0.3F);
    p.status_b1 = ParamInit(config.seed, "encoder.status_b1").normal({d}, 0.1F);
    p.status_w2 = ParamInit(config.seed, "encoder.status_w2").normal({d, d}, 1.0F / std::sqrt(static_cast<float>(d)));
    p.status_b2 = ParamInit(config.seed, "encoder.status_b2").normal({d}, 0.1F);
    return p;
}

Tensor status_embedding(const EgoStatus& status, const EncoderParams& params, FlopCounter* counter) {
    const auto f = status.to_features();
    Tensor x({1, EgoStatus::kDims}, std::vector<float>(f.begin(), f.end()));
    Tensor h = matmul(x, params.status_w1, counter);
    add_row_broadcast(h, params.status_b1);
    h = gelu(h);
    Tensor y = matmul(h, params.status_w2, counter);
    add_row_broadcast(y, params.status_b2);
    return y.reshaped({y.dim(1)});
}

TokenSet encode(const FrameInput& frame, const EncoderParams& params, const ModelConfig& config,
                FlopCounter* counter) {
    const auto& img = frame.images;
    if (img.rank() != 4 || img.dim(3) != 3) {
        throw ContractError("encode: images must be [V, H, W, 3], got " + img.shape_string());
    }
    const int V = static_cast<int>(img.dim(0));
    const int H = static_cast<int>(img.dim(1));
    const int W = static_cast<int>(img.dim(2));
    const int ps = config.patch;
    const int patches = config.patches_per_view(H, W); // throws ConfigError on bad dims
    const int pw = W / ps;
    const std::int64_t d = config.dim;
    const std::int64_t patch_len = static_cast<std::int64_t>(ps) * ps * 3;
    if (params.patch_projection.dim(0) != patch_len || params.patch_projection.dim(1) != d) {
        throw ContractError("encode: patch projection does not match model config");
    }

    TokenLayout layout{V, patches, config.traj_tokens};
    TokenSet out{Tensor({V, layout.per_view(), d}), layout};

    // Gather all patches of all views into one matrix and project once.
    Tensor flat_patches({static_cast<std::int64_t>(V) * patches, patch_len});
    for (int v = 0; v < V; ++v) {
        for (int p = 0; p < patches; ++p) {
            const int pr = p / pw;
            const int pc = p % pw;
            float* dst = flat_patches.raw() + (static_cast<std::size_t>(v) * patches + p) * patch_len;
            for (int r = 0; r < ps; ++r) {
                const float* src = img.raw() + ((static_cast<std::size_t>(v) * H + pr * ps + r) * W + pc * ps) * 3;
                std::memcpy(dst + static_cast<std::size_t>(r) * ps * 3, src, sizeof(float) * ps * 3);
            }
        }
    }
    const Tensor projected = matmul(flat_patches, params.patch_projection, counter);
    const Tensor status = status_embedding(frame.ego, params, counter);

    for (int v = 0; v < V; ++v) {
        float* base = out.tokens.raw() + static_cast<std::size_t>(v) * layout.per_view() * d;
        std::memcpy(base, projected.raw() + static_cast<std::size_t>(v) * patches * d, sizeof(float) * patches * d);
        std::memcpy(base + static_cast<std::size_t>(layout.pose_offset()) * d, params.pose_seed.raw(),
                    sizeof(float) * d);
        for (int k = 0; k < layout.traj_tokens; ++k) {
            float* tok = base + static_cast<std::size_t>(layout.traj_offset() + k) * d;
            for (std::int64_t j = 0; j < d; ++j) {
                tok[j] = params.traj_seeds.at(k, j) + status[static_cast<std::size_t>(j)];
            }
        }
    }
    return out;
}

} // namespace streamgeo
