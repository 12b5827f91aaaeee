#include "streamgeo/transformer.hpp"

#include "streamgeo/errors.hpp"

#include <cmath>
#include <cstring>
#include <string>

namespace streamgeo {

namespace {

AttentionParams init_attention(const ModelConfig& c, const std::string& tag) {
    const std::int64_t d = c.dim;
    const float w_std = 1.0F / std::sqrt(static_cast<float>(d));
    AttentionParams p;
    p.norm_gain = Tensor::filled({d}, 1.0F);
    p.norm_bias = Tensor::zeros({d});
    p.wq = ParamInit(c.seed, tag + ".wq").normal({d, d}, w_std);
    p.wk = ParamInit(c.seed, tag + ".wk").normal({d, d}, w_std);
    p.wv = ParamInit(c.seed, tag + ".wv").normal({d, d}, w_std);
    p.wo = ParamInit(c.seed, tag + ".wo").normal({d, d}, w_std);
    p.q_norm_gain = Tensor::filled({c.head_dim()}, 1.0F);
    p.k_norm_gain = Tensor::filled({c.head_dim()}, 1.0F);
    p.layerscale = Tensor::filled({d}, c.layerscale_init);
    return p;
}

MlpParams init_mlp(const ModelConfig& c, const std::string& tag) {
    const std::int64_t d = c.dim;
    const std::int64_t hidden = d * c.mlp_ratio;
    MlpParams p;
    p.norm_gain = Tensor::filled({d}, 1.0F);
    p.norm_bias = Tensor::zeros({d});
    p.w1 = ParamInit(c.seed, tag + ".w1").normal({d, hidden}, 1.0F / std::sqrt(static_cast<float>(d)));
    p.b1 = ParamInit(c.seed, tag + ".b1").normal({hidden}, 0.02F);
    p.w2 = ParamInit(c.seed, tag + ".w2").normal({hidden, d}, 1.0F / std::sqrt(static_cast<float>(hidden)));
    p.b2 = ParamInit(c.seed, tag + ".b2").normal({d}, 0.02F);
    p.layerscale = Tensor::filled({d}, c.layerscale_init);
    return p;
}

// Adds the per-slot embedding to every view's rows of x [V*n, d].
void add_slot_embedding(Tensor& x, const Tensor& slots) {
    const auto n = slots.dim(0);
    const auto d = slots.dim(1);
    for (std::int64_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        const float* e = slots.raw() + (r % n) * d;
        for (std::int64_t j = 0; j < d; ++j) {
            row[j] += e[j];
        }
    }
}

Tensor rows_slice(const Tensor& x, std::int64_t begin, std::int64_t count) {
    const auto d = x.dim(x.rank() - 1);
    Tensor out({count, d});
    std::memcpy(out.raw(), x.raw() + begin * d, sizeof(float) * static_cast<std::size_t>(count * d));
    return out;
}

// Concatenates [h, n_i, dh] tensors along the token axis.
Tensor concat_tokens(const std::vector<const Tensor*>& parts) {
    const auto h = parts.front()->dim(0);
    const auto dh = parts.front()->dim(2);
    std::int64_t total = 0;
    for (const auto* p : parts) {
        total += p->dim(1);
    }
    Tensor out({h, total, dh});
    for (std::int64_t head = 0; head < h; ++head) {
        float* dst = out.raw() + head * total * dh;
        for (const auto* p : parts) {
            const auto n = p->dim(1);
            std::memcpy(dst, p->raw() + head * n * dh, sizeof(float) * static_cast<std::size_t>(n * dh));
            dst += n * dh;
        }
    }
    return out;
}

} // namespace

BlockParams BlockParams::init(const ModelConfig& config, int tokens_per_view, int block_index) {
    config.validate();
    const std::string tag = "block" + std::to_string(block_index);
    BlockParams b;
    b.intra = init_attention(config, tag + ".intra");
    b.cross = init_attention(config, tag + ".cross");
    b.temporal = init_attention(config, tag + ".temporal");
    b.mlp = init_mlp(config, tag + ".mlp");
    b.slot_embedding = ParamInit(config.seed, tag + ".slots").normal({tokens_per_view, config.dim}, 0.1F);
    return b;
}

void BlockParams::set_layerscale(float value) {
    for (auto* ls : {&intra.layerscale, &cross.layerscale, &temporal.layerscale, &mlp.layerscale}) {
        *ls = Tensor::filled(ls->shape(), value);
    }
}

std::uint64_t FrameKV::hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](const void* data, std::size_t bytes) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < bytes; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    feed(&frame_index, sizeof(frame_index));
    for (const Tensor* t : {&keys, &values, &snapshot}) {
        feed(t->raw(), t->size() * sizeof(float));
    }
    return h;
}

namespace sublayer {

Tensor split_heads(const Tensor& x, int heads) {
    const auto n = x.dim(0);
    const auto d = x.dim(1);
    const auto dh = d / heads;
    Tensor out({heads, n, dh});
    for (std::int64_t i = 0; i < n; ++i) {
        for (int h = 0; h < heads; ++h) {
            std::memcpy(out.raw() + (h * n + i) * dh, x.raw() + i * d + h * dh, sizeof(float) * dh);
        }
    }
    return out;
}

Tensor merge_heads(const Tensor& x) {
    const auto heads = x.dim(0);
    const auto n = x.dim(1);
    const auto dh = x.dim(2);
    Tensor out({n, heads * dh});
    for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t i = 0; i < n; ++i) {
            std::memcpy(out.raw() + i * heads * dh + h * dh, x.raw() + (h * n + i) * dh, sizeof(float) * dh);
        }
    }
    return out;
}

Projection project(const Tensor& normed, const AttentionParams& p, int heads, FlopCounter* counter) {
    Projection out;
    const Tensor q = matmul(normed, p.wq, counter);
    const Tensor k = matmul(normed, p.wk, counter);
    const Tensor v = matmul(normed, p.wv, counter);
    const auto n = normed.dim(0);
    const auto dh = normed.dim(1) / heads;
    // QKNorm: RMS-normalize each head's query and key vector.
    out.q = rmsnorm(split_heads(q, heads).reshaped({heads * n, dh}), p.q_norm_gain).reshaped({heads, n, dh});
    out.k = rmsnorm(split_heads(k, heads).reshaped({heads * n, dh}), p.k_norm_gain).reshaped({heads, n, dh});
    out.v = split_heads(v, heads);
    return out;
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, FlopCounter* counter) {
    const auto heads = q.dim(0);
    const auto n = q.dim(1);
    const auto dh = q.dim(2);
    const auto m = k.dim(1);
    if (k.dim(0) != heads || v.dim(0) != heads || k.dim(2) != dh || v.dim(2) != dh || v.dim(1) != m) {
        throw ContractError("attend: incompatible q/k/v shapes");
    }
    const float scale = 1.0F / std::sqrt(static_cast<float>(dh));
    Tensor out({heads, n, dh});
    for (std::int64_t h = 0; h < heads; ++h) {
        const Tensor qh({n, dh}, std::vector<float>(q.raw() + h * n * dh, q.raw() + (h + 1) * n * dh));
        const Tensor kh({m, dh}, std::vector<float>(k.raw() + h * m * dh, k.raw() + (h + 1) * m * dh));
        const Tensor vh({m, dh}, std::vector<float>(v.raw() + h * m * dh, v.raw() + (h + 1) * m * dh));
        Tensor logits = matmul_transposed(qh, kh, counter);
        for (auto& l : logits.data()) {
            l *= scale;
        }
        softmax_rows_inplace(logits);
        const Tensor o = matmul(logits, vh, counter);
        std::memcpy(out.raw() + h * n * dh, o.raw(), sizeof(float) * o.size());
    }
    return out;
}

Tensor residual_out(const Tensor& x, const Tensor& heads_out, const AttentionParams& p, FlopCounter* counter) {
    const Tensor proj = matmul(merge_heads(heads_out), p.wo, counter);
    Tensor y = x;
    add_inplace(y, scale_rows(proj, p.layerscale));
    return y;
}

Tensor intra_view(const Tensor& x, const BlockParams& b, const TokenLayout& layout, const ModelConfig& config,
                  FlopCounter* counter) {
    Tensor h = layernorm(x, b.intra.norm_gain, b.intra.norm_bias);
    add_slot_embedding(h, b.slot_embedding);
    const auto n = layout.per_view();
    Tensor merged({config.heads, layout.total(), config.head_dim()});
    for (int v = 0; v < layout.views; ++v) {
        const auto proj = project(rows_slice(h, static_cast<std::int64_t>(v) * n, n), b.intra, config.heads, counter);
        const Tensor o = attend(proj.q, proj.k, proj.v, counter);
        const auto dh = config.head_dim();
        for (int hd = 0; hd < config.heads; ++hd) {
            std::memcpy(merged.raw() + (static_cast<std::int64_t>(hd) * layout.total() + static_cast<std::int64_t>(v) * n) * dh,
                        o.raw() + static_cast<std::int64_t>(hd) * n * dh, sizeof(float) * n * dh);
        }
    }
    return residual_out(x, merged, b.intra, counter);
}

Tensor cross_view(const Tensor& x, const BlockParams& b, const TokenLayout& /*layout*/, const ModelConfig& config,
                  FlopCounter* counter) {
    Tensor h = layernorm(x, b.cross.norm_gain, b.cross.norm_bias);
    add_slot_embedding(h, b.slot_embedding);
    const auto proj = project(h, b.cross, config.heads, counter);
    return residual_out(x, attend(proj.q, proj.k, proj.v, counter), b.cross, counter);
}

Tensor mlp(const Tensor& x, const MlpParams& p, FlopCounter* counter) {
    const Tensor h = layernorm(x, p.norm_gain, p.norm_bias);
    Tensor a = matmul(h, p.w1, counter);
    add_row_broadcast(a, p.b1);
    a = gelu(a);
    Tensor o = matmul(a, p.w2, counter);
    add_row_broadcast(o, p.b2);
    Tensor y = x;
    add_inplace(y, scale_rows(o, p.layerscale));
    return y;
}

Tensor sinusoid(std::int64_t age, int dim) {
    Tensor pe({dim});
    for (int j = 0; j < dim; j += 2) {
        const double freq = std::pow(10000.0, -static_cast<double>(j) / dim);
        pe[static_cast<std::size_t>(j)] = static_cast<float>(std::sin(static_cast<double>(age) * freq));
        if (j + 1 < dim) {
            pe[static_cast<std::size_t>(j + 1)] = static_cast<float>(std::cos(static_cast<double>(age) * freq));
        }
    }
    return pe;
}

Projection temporal_project(const Tensor& x, const BlockParams& b, std::int64_t position, std::int64_t age,
                            const ModelConfig& config, FlopCounter* counter) {
    Tensor h = layernorm(x, b.temporal.norm_gain, b.temporal.norm_bias);
    if (config.encoding == TemporalEncoding::AbsoluteAdditive) {
        add_row_broadcast(h, sinusoid(age, config.dim));
    }
    Projection p = project(h, b.temporal, config.heads, counter);
    if (config.encoding == TemporalEncoding::Rotary) {
        p.q = apply_rotary(p.q, position, config.rotary_base);
        p.k = apply_rotary(p.k, position, config.rotary_base);
    }
    return p;
}

} // namespace sublayer

BlockOutput run_block(const TokenSet& tokens, const BlockCacheView& cache_view, const BlockParams& block,
                      std::int64_t t, const BlockContext& ctx) {
    if (!ctx.config) {
        throw ContractError("run_block: missing model config");
    }
    const ModelConfig& config = *ctx.config;
    if (cache_view.size() > ctx.window) {
        throw CapacityError("run_block: cache view holds " + std::to_string(cache_view.size()) +
                            " frames, window is " + std::to_string(ctx.window));
    }
    for (std::size_t i = 0; i < cache_view.size(); ++i) {
        if (cache_view[i]->frame_index >= t) {
            throw CausalityError("run_block: cached frame " + std::to_string(cache_view[i]->frame_index) +
                                 " is not before query frame " + std::to_string(t));
        }
        if (i > 0 && cache_view[i]->frame_index <= cache_view[i - 1]->frame_index) {
            throw ContractError("run_block: cache view not sorted by frame index");
        }
    }

    FlopCounter* counter = ctx.counter;
    Tensor x = tokens.flat();
    x = sublayer::intra_view(x, block, tokens.layout, config, counter);
    x = sublayer::cross_view(x, block, tokens.layout, config, counter);

    BlockOutput out;
    out.kv.frame_index = t;
    out.kv.snapshot = x;
    // The current frame is always the newest, so its age is zero here.
    auto proj = sublayer::temporal_project(x, block, t, 0, config, counter);
    std::vector<const Tensor*> keys;
    std::vector<const Tensor*> values;
    for (const auto* kv : cache_view) {
        keys.push_back(&kv->keys);
        values.push_back(&kv->values);
    }
    keys.push_back(&proj.k);
    values.push_back(&proj.v);
    const Tensor k_all = keys.size() == 1 ? proj.k : concat_tokens(keys);
    const Tensor v_all = values.size() == 1 ? proj.v : concat_tokens(values);
    x = sublayer::residual_out(x, sublayer::attend(proj.q, k_all, v_all, counter), block.temporal, counter);
    out.kv.keys = std::move(proj.k);
    out.kv.values = std::move(proj.v);

    x = sublayer::mlp(x, block.mlp, counter);
    out.tokens = TokenSet::from_flat(x, tokens.layout);
    return out;
}

StackOutput run_stack(const TokenSet& tokens, const std::vector<BlockCacheView>& cache_views,
                      std::span<const BlockParams> params, std::int64_t t, const BlockContext& ctx) {
    if (cache_views.size() != params.size()) {
        throw ContractError("run_stack: need one cache view per block");
    }
    StackOutput out;
    out.tokens = tokens;
    out.kv.reserve(params.size());
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto r = run_block(out.tokens, cache_views[b], params[b], t, ctx);
        out.tokens = std::move(r.tokens);
        out.kv.push_back(std::move(r.kv));
    }
    return out;
}

} // namespace streamgeo
