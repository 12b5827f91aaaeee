#include "streamgeo/heads.hpp"

#include "streamgeo/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>

namespace streamgeo {

namespace {

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b, FlopCounter* counter) {
    Tensor y = matmul(x, w, counter);
    add_row_broadcast(y, b);
    return y;
}

// Separable [1 2 1] x [1 2 1] / 16 with clamped borders; constants pass through unchanged.
void smooth_channel(const float* src, float* dst, int h, int w, int stride, int channel) {
    static constexpr float k[3] = {0.25F, 0.5F, 0.25F};
    std::vector<float> tmp(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            float acc = 0.0F;
            for (int dc = -1; dc <= 1; ++dc) {
                const int cc = std::clamp(c + dc, 0, w - 1);
                acc += k[dc + 1] * src[(static_cast<std::size_t>(r) * w + cc) * stride + channel];
            }
            tmp[static_cast<std::size_t>(r) * w + c] = acc;
        }
    }
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            float acc = 0.0F;
            for (int dr = -1; dr <= 1; ++dr) {
                const int rr = std::clamp(r + dr, 0, h - 1);
                acc += k[dr + 1] * tmp[static_cast<std::size_t>(rr) * w + c];
            }
            dst[(static_cast<std::size_t>(r) * w + c) * stride + channel] = acc;
        }
    }
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

AttentionParams head_attention(const ModelConfig& c, const std::string& tag) {
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
    p.layerscale = Tensor::filled({d}, 1.0F);
    return p;
}

Tensor self_attention_layer(const Tensor& h, const AttentionParams& p, int heads, FlopCounter* counter) {
    const Tensor n = layernorm(h, p.norm_gain, p.norm_bias);
    const auto proj = sublayer::project(n, p, heads, counter);
    return sublayer::residual_out(h, sublayer::attend(proj.q, proj.k, proj.v, counter), p, counter);
}

Tensor cross_attention_layer(const Tensor& h, const Tensor& context, const AttentionParams& p, int heads,
                             FlopCounter* counter) {
    const Tensor n = layernorm(h, p.norm_gain, p.norm_bias);
    const auto dh = h.dim(1) / heads;
    const auto nq = h.dim(0);
    const auto nk = context.dim(0);
    const Tensor q = rmsnorm(sublayer::split_heads(matmul(n, p.wq, counter), heads).reshaped({heads * nq, dh}),
                             p.q_norm_gain)
                         .reshaped({heads, nq, dh});
    const Tensor k = rmsnorm(sublayer::split_heads(matmul(context, p.wk, counter), heads).reshaped({heads * nk, dh}),
                             p.k_norm_gain)
                         .reshaped({heads, nk, dh});
    const Tensor v = sublayer::split_heads(matmul(context, p.wv, counter), heads);
    return sublayer::residual_out(h, sublayer::attend(q, k, v, counter), p, counter);
}

struct DenoiseStep {
    Tensor correction; // [K, mode_dim]
    Tensor hidden;     // [K, d]
};

DenoiseStep denoise(const Tensor& noisy, double sigma, const Tensor& context, const DiffusionHeadParams& p,
                    FlopCounter* counter) {
    Tensor h = dense(noisy, p.in_proj, p.in_bias, counter);
    add_row_broadcast(h, scaled(p.sigma_embed, static_cast<float>(sigma)));
    for (const auto& layer : p.self_layers) {
        h = self_attention_layer(h, layer, p.heads, counter);
    }
    for (const auto& layer : p.cross_layers) {
        h = cross_attention_layer(h, context, layer, p.heads, counter);
    }
    Tensor c = dense(gelu(dense(h, p.denoise_w1, p.denoise_b1, counter)), p.denoise_w2, p.denoise_b2, counter);
    for (auto& v : c.data()) {
        v = p.delta_bound * std::tanh(v);
    }
    return {std::move(c), std::move(h)};
}

Tensor seeded_noise(std::int64_t rows, std::int64_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor n({rows, cols});
    for (auto& v : n.data()) {
        v = static_cast<float>(dist(rng));
    }
    return n;
}

double row_norm(const Tensor& t, std::int64_t r) {
    double s = 0.0;
    for (float v : t.row(r)) {
        s += static_cast<double>(v) * v;
    }
    return std::sqrt(s);
}

} // namespace

PointHeadParams PointHeadParams::init(const ModelConfig& config) {
    const std::int64_t d = config.dim;
    const std::int64_t out = static_cast<std::int64_t>(config.patch) * config.patch * 3;
    PointHeadParams p;
    p.patch = config.patch;
    p.w1 = ParamInit(config.seed, "point.w1").normal({d, d}, 1.0F / std::sqrt(static_cast<float>(d)));
    p.b1 = ParamInit(config.seed, "point.b1").normal({d}, 0.02F);
    p.w2 = ParamInit(config.seed, "point.w2").normal({d, out}, 0.1F / std::sqrt(static_cast<float>(d)));
    p.b2 = Tensor::zeros({out});
    // Depth channel biased to ~10 m.
    for (std::int64_t i = 2; i < out; i += 3) {
        p.b2[static_cast<std::size_t>(i)] = std::log(10.0F);
    }
    return p;
}

Tensor point_head(const TokenSet& tokens, const PointHeadParams& params, int height, int width,
                  FlopCounter* counter) {
    const int ps = params.patch;
    const auto& layout = tokens.layout;
    if (height % ps != 0 || width % ps != 0 || (height / ps) * (width / ps) != layout.patches) {
        throw ContractError("point_head: token layout does not match image size");
    }
    const int V = layout.views;
    const int pw = width / ps;
    Tensor raw({V, height, width, 3});
    for (int v = 0; v < V; ++v) {
        const Tensor blocks =
            dense(gelu(dense(tokens.patch_tokens(v), params.w1, params.b1, counter)), params.w2, params.b2, counter);
        for (int p = 0; p < layout.patches; ++p) {
            const int pr = p / pw;
            const int pc = p % pw;
            for (int r = 0; r < ps; ++r) {
                float* dst = raw.raw() + ((static_cast<std::size_t>(v) * height + pr * ps + r) * width + pc * ps) * 3;
                std::memcpy(dst, blocks.raw() + (static_cast<std::size_t>(p) * ps * ps + static_cast<std::size_t>(r) * ps) * 3,
                            sizeof(float) * ps * 3);
            }
        }
    }
    Tensor out({V, height, width, 3});
    const std::size_t plane = static_cast<std::size_t>(height) * width * 3;
    for (int v = 0; v < V; ++v) {
        for (int ch = 0; ch < 3; ++ch) {
            smooth_channel(raw.raw() + v * plane, out.raw() + v * plane, height, width, 3, ch);
        }
    }
    for (std::size_t i = 2; i < out.size(); i += 3) {
        out[i] = std::exp(out[i]);
    }
    return out;
}

Tensor camera_to_ego(const Tensor& camera_points, const CameraRig& rig) {
    if (camera_points.rank() != 4 || camera_points.dim(0) != rig.views()) {
        throw ContractError("camera_to_ego: pointmap views do not match rig");
    }
    Tensor out = camera_points;
    const std::size_t per_view = static_cast<std::size_t>(camera_points.dim(1) * camera_points.dim(2));
    for (int v = 0; v < rig.views(); ++v) {
        const SE3& cam = rig.camera_in_ego[static_cast<std::size_t>(v)];
        for (std::size_t i = 0; i < per_view; ++i) {
            float* p = out.raw() + (v * per_view + i) * 3;
            const Vec3 e = cam.apply({p[0], p[1], p[2]});
            p[0] = static_cast<float>(e[0]);
            p[1] = static_cast<float>(e[1]);
            p[2] = static_cast<float>(e[2]);
        }
    }
    return out;
}

KeyValueConfig AnchorSet::to_config() const {
    KeyValueConfig kv;
    kv.set("format", std::string("streamgeo-anchors/1"));
    kv.set("kind", kind);
    kv.set("count", count());
    kv.set("mode_dim", mode_dim());
    for (int k = 0; k < count(); ++k) {
        const auto r = modes.row(k);
        kv.set("anchor." + std::to_string(k), std::vector<double>(r.begin(), r.end()));
    }
    return kv;
}

AnchorSet AnchorSet::from_config(const KeyValueConfig& kv) {
    if (kv.get_string("format", "") != "streamgeo-anchors/1") {
        throw FormatError("anchor config: missing or unknown format tag");
    }
    AnchorSet a;
    a.kind = kv.get_string("kind");
    const auto k = kv.get_int("count");
    const auto m = kv.get_int("mode_dim");
    if (k < 1 || m < 1) {
        throw FormatError("anchor config: count and mode_dim must be positive");
    }
    a.modes = Tensor({k, m});
    for (std::int64_t i = 0; i < k; ++i) {
        const auto vals = kv.get_doubles("anchor." + std::to_string(i));
        if (static_cast<std::int64_t>(vals.size()) != m) {
            throw FormatError("anchor config: anchor " + std::to_string(i) + " has wrong length");
        }
        for (std::int64_t j = 0; j < m; ++j) {
            a.modes.at(i, j) = static_cast<float>(vals[static_cast<std::size_t>(j)]);
        }
    }
    return a;
}

KMeansResult kmeans(const std::vector<std::vector<double>>& samples, int k, int iterations, std::uint64_t seed) {
    if (k < 1) {
        throw ConfigError("kmeans: k must be >= 1");
    }
    if (samples.size() < static_cast<std::size_t>(k)) {
        throw ConfigError("kmeans: need at least k samples");
    }
    const std::size_t n = samples.size();
    std::mt19937_64 rng(seed);
    KMeansResult res;

    // k-means++ seeding
    res.centroids.push_back(samples[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
    std::vector<double> d2(n);
    while (res.centroids.size() < static_cast<std::size_t>(k)) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : res.centroids) {
                const double d = distance(samples[i], c);
                best = std::min(best, d * d);
            }
            d2[i] = best;
            total += best;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (pick = 0; pick + 1 < n; ++pick) {
                u -= d2[pick];
                if (u <= 0.0) {
                    break;
                }
            }
        } else {
            pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        }
        res.centroids.push_back(samples[pick]);
    }

    res.assignment.assign(n, 0);
    auto assign = [&] {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const double d = distance(samples[i], res.centroids[static_cast<std::size_t>(c)]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            changed |= res.assignment[i] != best;
            res.assignment[i] = best;
        }
        return changed;
    };
    assign();
    for (int it = 0; it < iterations; ++it) {
        const std::size_t dim = samples.front().size();
        std::vector<std::vector<double>> sums(static_cast<std::size_t>(k), std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = sums[static_cast<std::size_t>(res.assignment[i])];
            for (std::size_t j = 0; j < dim; ++j) {
                s[j] += samples[i][j];
            }
            ++counts[static_cast<std::size_t>(res.assignment[i])];
        }
        for (int c = 0; c < k; ++c) {
            const auto cc = static_cast<std::size_t>(c);
            if (counts[cc] == 0) {
                continue;
            }
            for (std::size_t j = 0; j < dim; ++j) {
                res.centroids[cc][j] = sums[cc][j] / static_cast<double>(counts[cc]);
            }
        }
        if (!assign()) {
            break;
        }
    }

    res.radius.assign(static_cast<std::size_t>(k), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(res.assignment[i]);
        res.radius[c] = std::max(res.radius[c], distance(samples[i], res.centroids[c]));
    }
    res.max_radius = *std::max_element(res.radius.begin(), res.radius.end());
    return res;
}

AnchorSet build_pose_anchors(const std::vector<SE3>& samples, int k, std::uint64_t seed, int iterations) {
    std::vector<std::vector<double>> rows;
    rows.reserve(samples.size());
    for (const auto& s : samples) {
        const auto v = s.to_vector();
        rows.emplace_back(v.begin(), v.end());
    }
    const auto km = kmeans(rows, k, iterations, seed);
    AnchorSet a{"pose", Tensor({k, 7})};
    for (int i = 0; i < k; ++i) {
        const auto pose = SE3::from_vector(km.centroids[static_cast<std::size_t>(i)]); // renormalizes
        const auto v = pose.to_vector();
        for (int j = 0; j < 7; ++j) {
            a.modes.at(i, j) = static_cast<float>(v[static_cast<std::size_t>(j)]);
        }
    }
    return a;
}

AnchorSet build_traj_anchors(const std::vector<Trajectory>& samples, int k, std::uint64_t seed, int iterations) {
    if (samples.empty() || samples.front().empty()) {
        throw ConfigError("build_traj_anchors: need non-empty trajectories");
    }
    const std::size_t n = samples.front().size();
    std::vector<std::vector<double>> rows;
    for (const auto& s : samples) {
        if (s.size() != n) {
            throw ConfigError("build_traj_anchors: trajectories differ in length");
        }
        std::vector<double> r;
        for (const auto& w : s) {
            r.insert(r.end(), {w.x, w.y, w.yaw});
        }
        rows.push_back(std::move(r));
    }
    const auto km = kmeans(rows, k, iterations, seed);
    AnchorSet a{"traj", Tensor({k, static_cast<std::int64_t>(n * 3)})};
    for (int i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < n * 3; ++j) {
            a.modes.at(i, static_cast<std::int64_t>(j)) = static_cast<float>(km.centroids[static_cast<std::size_t>(i)][j]);
        }
    }
    return a;
}

DiffusionHeadParams DiffusionHeadParams::init(const ModelConfig& config, int mode_dim, const std::string& tag) {
    config.validate();
    if (mode_dim < 1) {
        throw ConfigError("diffusion head: mode dimension must be positive");
    }
    const std::int64_t d = config.dim;
    const float w_std = 1.0F / std::sqrt(static_cast<float>(d));
    DiffusionHeadParams p;
    p.mode_dim = mode_dim;
    p.heads = config.heads;
    p.sigma_high = config.sigma_high;
    p.sigma_low = config.sigma_low;
    p.in_proj = ParamInit(config.seed, tag + ".in_proj").normal({mode_dim, d}, 1.0F / std::sqrt(static_cast<float>(mode_dim)));
    p.in_bias = ParamInit(config.seed, tag + ".in_bias").normal({d}, 0.02F);
    p.sigma_embed = ParamInit(config.seed, tag + ".sigma").normal({d}, 1.0F);
    for (int i = 0; i < 4; ++i) {
        p.self_layers.push_back(head_attention(config, tag + ".self" + std::to_string(i)));
    }
    for (int i = 0; i < 2; ++i) {
        p.cross_layers.push_back(head_attention(config, tag + ".cross" + std::to_string(i)));
    }
    p.denoise_w1 = ParamInit(config.seed, tag + ".dn_w1").normal({d, d}, w_std);
    p.denoise_b1 = ParamInit(config.seed, tag + ".dn_b1").normal({d}, 0.02F);
    p.denoise_w2 = ParamInit(config.seed, tag + ".dn_w2").normal({d, mode_dim}, 0.1F * w_std);
    p.denoise_b2 = Tensor::zeros({mode_dim});
    p.score_w1 = ParamInit(config.seed, tag + ".sc_w1").normal({d, d}, w_std);
    p.score_b1 = ParamInit(config.seed, tag + ".sc_b1").normal({d}, 0.02F);
    p.score_w2 = ParamInit(config.seed, tag + ".sc_w2").normal({d, 1}, w_std);
    p.score_b2 = Tensor::zeros({1});
    return p;
}

void DiffusionHeadParams::zero_denoiser() {
    denoise_w2 = Tensor::zeros(denoise_w2.shape());
    denoise_b2 = Tensor::zeros(denoise_b2.shape());
}

Tensor mean_rows(const Tensor& x) {
    const auto n = x.rows();
    const auto d = x.cols();
    Tensor m({1, d});
    for (std::int64_t r = 0; r < n; ++r) {
        const auto row = x.row(r);
        for (std::int64_t j = 0; j < d; ++j) {
            m[static_cast<std::size_t>(j)] += row[j];
        }
    }
    for (auto& v : m.data()) {
        v /= static_cast<float>(n);
    }
    return m;
}

DiffusionResult diffusion_decode(const Tensor& context, const AnchorSet& anchors, const DiffusionHeadParams& params,
                                 std::uint64_t rng_seed, FlopCounter* counter) {
    if (anchors.count() == 0) {
        throw ConfigError("diffusion_decode: empty anchor set");
    }
    if (anchors.mode_dim() != params.mode_dim) {
        throw ContractError("diffusion_decode: anchor dimension does not match head");
    }
    const auto K = static_cast<std::int64_t>(anchors.count());
    const auto m = static_cast<std::int64_t>(params.mode_dim);
    const Tensor ctx = context.rank() == 1 ? context.reshaped({1, context.dim(0)}) : context;

    // Step 1: noise at sigma_high, predict a correction to each anchor.
    Tensor x1 = anchors.modes;
    const Tensor n1 = seeded_noise(K, m, mix_seed(rng_seed, 1));
    for (std::size_t i = 0; i < x1.size(); ++i) {
        x1[i] += static_cast<float>(params.sigma_high) * n1[i];
    }
    const auto s1 = denoise(x1, params.sigma_high, ctx, params, counter);
    Tensor refined1 = add(anchors.modes, s1.correction);

    // Step 2: re-noise the refined modes at sigma_low and denoise again.
    Tensor x2 = refined1;
    const Tensor n2 = seeded_noise(K, m, mix_seed(rng_seed, 2));
    for (std::size_t i = 0; i < x2.size(); ++i) {
        x2[i] += static_cast<float>(params.sigma_low) * n2[i];
    }
    const auto s2 = denoise(x2, params.sigma_low, ctx, params, counter);
    const Tensor refined2 = add(anchors.modes, s2.correction);

    const Tensor scores = dense(gelu(dense(s2.hidden, params.score_w1, params.score_b1, counter)), params.score_w2,
                                params.score_b2, counter);

    DiffusionResult res;
    res.scores.assign(scores.data().begin(), scores.data().end());
    res.index = static_cast<int>(std::max_element(res.scores.begin(), res.scores.end()) - res.scores.begin());
    const auto sel = refined2.row(res.index);
    res.selected.assign(sel.begin(), sel.end());
    res.refinement = row_norm(s2.correction, res.index);
    res.total_refinement = row_norm(s1.correction, res.index) + res.refinement;
    return res;
}

PoseHeadOutput pose_head(const Tensor& pose_tokens, const AnchorSet& anchors, const DiffusionHeadParams& params,
                         std::uint64_t seed, FlopCounter* counter) {
    if (params.mode_dim != 7) {
        throw ContractError("pose_head: pose modes must be 7-dimensional");
    }
    PoseHeadOutput out;
    out.raw = diffusion_decode(mean_rows(pose_tokens), anchors, params, seed, counter);
    const auto& s = out.raw.selected;
    out.pose.translation = {s[0], s[1], s[2]};
    const Quat q{s[3], s[4], s[5], s[6]};
    out.pose.rotation = q.norm() > 1e-12 ? q.normalized().canonical() : Quat::identity();
    return out;
}

TrajHeadOutput traj_head(const Tensor& traj_tokens, const AnchorSet& anchors, const DiffusionHeadParams& params,
                         std::uint64_t seed, FlopCounter* counter) {
    if (params.mode_dim % 3 != 0) {
        throw ContractError("traj_head: trajectory modes must hold (x, y, yaw) triples");
    }
    TrajHeadOutput out;
    out.raw = diffusion_decode(mean_rows(traj_tokens), anchors, params, seed, counter);
    const auto& s = out.raw.selected;
    for (std::size_t i = 0; i + 2 < s.size(); i += 3) {
        out.trajectory.push_back({s[i], s[i + 1], s[i + 2]});
    }
    return out;
}

} // namespace streamgeo
