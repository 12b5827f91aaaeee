#pragma once

#include "streamgeo/io.hpp"
#include "streamgeo/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>

namespace streamgeo {

// How frames are told apart inside temporal attention.
enum class TemporalEncoding {
    Rotary,           // rotary on the absolute frame index; logits see only index differences
    AbsoluteAdditive, // sinusoid of the frame's age added to the sublayer input (negative control)
};

struct ModelConfig {
    int dim = 64;
    int heads = 4;
    int layers = 4;
    int patch = 16;
    int traj_tokens = 8;
    int mlp_ratio = 4;
    int horizon = 6; // trajectory waypoints N
    int anchors = 20;
    double rotary_base = 10000.0;
    float layerscale_init = 0.01F;
    double sigma_high = 0.5; // first diffusion noise level
    double sigma_low = 0.1;  // second diffusion noise level
    std::uint64_t seed = 7;
    TemporalEncoding encoding = TemporalEncoding::Rotary;

    int head_dim() const { return dim / heads; }
    // Tokens per view: patches + 1 pose token + trajectory tokens.
    int tokens_per_view(int height, int width) const;
    int patches_per_view(int height, int width) const;

    void validate() const;
    void write(KeyValueConfig& kv, const std::string& prefix = "model.") const;
    static ModelConfig read(const KeyValueConfig& kv, const std::string& prefix = "model.");
};

// Deterministic parameter initializer; every parameter tensor draws from a
// stream keyed by (model seed, tag) so adding a parameter never shifts others.
class ParamInit {
public:
    ParamInit(std::uint64_t seed, const std::string& tag);

    Tensor normal(std::vector<std::int64_t> shape, float stddev);
    Tensor uniform(std::vector<std::int64_t> shape, float lo, float hi);

private:
    std::mt19937_64 rng_;
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);
std::uint64_t hash_string(const std::string& s);

} // namespace streamgeo
