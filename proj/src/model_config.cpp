#include "streamgeo/model_config.hpp"

#include "streamgeo/errors.hpp"

#include <charconv>

namespace streamgeo {

int ModelConfig::patches_per_view(int height, int width) const {
    if (height % patch != 0 || width % patch != 0) {
        throw ConfigError("image " + std::to_string(height) + "x" + std::to_string(width) +
                          " not divisible by patch size " + std::to_string(patch));
    }
    return (height / patch) * (width / patch);
}

int ModelConfig::tokens_per_view(int height, int width) const {
    return patches_per_view(height, width) + 1 + traj_tokens;
}

void ModelConfig::validate() const {
    if (dim < 2 || heads < 1 || layers < 1 || patch < 1 || traj_tokens < 1 || mlp_ratio < 1 ||
        horizon < 0 || anchors < 1) {
        throw ConfigError("model dimensions must be positive");
    }
    if (dim % heads != 0) {
        throw ConfigError("model dim " + std::to_string(dim) + " not divisible by heads " +
                          std::to_string(heads));
    }
    if (head_dim() % 2 != 0) {
        throw ConfigError("head dimension must be even for rotary encoding");
    }
    if (!(rotary_base > 1.0)) {
        throw ConfigError("rotary base must exceed 1");
    }
    if (sigma_high < 0.0 || sigma_low < 0.0) {
        throw ConfigError("diffusion noise levels must be non-negative");
    }
}

void ModelConfig::write(KeyValueConfig& kv, const std::string& prefix) const {
    kv.set(prefix + "dim", dim);
    kv.set(prefix + "heads", heads);
    kv.set(prefix + "layers", layers);
    kv.set(prefix + "patch", patch);
    kv.set(prefix + "traj_tokens", traj_tokens);
    kv.set(prefix + "mlp_ratio", mlp_ratio);
    kv.set(prefix + "horizon", horizon);
    kv.set(prefix + "anchors", anchors);
    kv.set(prefix + "rotary_base", rotary_base);
    char buf[32];
    const auto end = std::to_chars(buf, buf + sizeof(buf), layerscale_init).ptr;
    kv.set(prefix + "layerscale_init", std::string(buf, end));
    kv.set(prefix + "sigma_high", sigma_high);
    kv.set(prefix + "sigma_low", sigma_low);
    kv.set(prefix + "seed", static_cast<std::int64_t>(seed));
    kv.set(prefix + "encoding", std::string(encoding == TemporalEncoding::Rotary ? "rotary" : "absolute"));
}

ModelConfig ModelConfig::read(const KeyValueConfig& kv, const std::string& prefix) {
    ModelConfig c;
    c.dim = static_cast<int>(kv.get_int(prefix + "dim", c.dim));
    c.heads = static_cast<int>(kv.get_int(prefix + "heads", c.heads));
    c.layers = static_cast<int>(kv.get_int(prefix + "layers", c.layers));
    c.patch = static_cast<int>(kv.get_int(prefix + "patch", c.patch));
    c.traj_tokens = static_cast<int>(kv.get_int(prefix + "traj_tokens", c.traj_tokens));
    c.mlp_ratio = static_cast<int>(kv.get_int(prefix + "mlp_ratio", c.mlp_ratio));
    c.horizon = static_cast<int>(kv.get_int(prefix + "horizon", c.horizon));
    c.anchors = static_cast<int>(kv.get_int(prefix + "anchors", c.anchors));
    c.rotary_base = kv.get_double(prefix + "rotary_base", c.rotary_base);
    c.layerscale_init = static_cast<float>(kv.get_double(prefix + "layerscale_init", c.layerscale_init));
    c.sigma_high = kv.get_double(prefix + "sigma_high", c.sigma_high);
    c.sigma_low = kv.get_double(prefix + "sigma_low", c.sigma_low);
    c.seed = static_cast<std::uint64_t>(kv.get_int(prefix + "seed", static_cast<std::int64_t>(c.seed)));
    const auto enc = kv.get_string(prefix + "encoding", "rotary");
    if (enc == "rotary") {
        c.encoding = TemporalEncoding::Rotary;
    } else if (enc == "absolute") {
        c.encoding = TemporalEncoding::AbsoluteAdditive;
    } else {
        throw ConfigError("unknown temporal encoding '" + enc + "'");
    }
    return c;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t hash_string(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL; // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

ParamInit::ParamInit(std::uint64_t seed, const std::string& tag) : rng_(mix_seed(seed, hash_string(tag))) {}

Tensor ParamInit::normal(std::vector<std::int64_t> shape, float stddev) {
    Tensor t(std::move(shape));
    std::normal_distribution<float> dist(0.0F, stddev);
    for (auto& v : t.data()) {
        v = dist(rng_);
    }
    return t;
}

Tensor ParamInit::uniform(std::vector<std::int64_t> shape, float lo, float hi) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<float> dist(lo, hi);
    for (auto& v : t.data()) {
        v = dist(rng_);
    }
    return t;
}

} // namespace streamgeo
