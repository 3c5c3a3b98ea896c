#pragma once

#include <functional>
#include <string>
#include <vector>

#include "core/nn.hpp"
#include "flow/flow.hpp"

namespace nmfg {

// Residual U-Net that predicts a spatial correction for a pixel-wise noise
// field. Inputs of any size are reflect-padded up to a multiple of 2^depth and
// cropped back, so the output shape always equals the input shape.
struct GeneratorConfig {
    int depth = 3;              // number of downsampling steps
    int64_t base_channels = 32; // channels at full resolution, doubled per level
};

class Generator {
public:
    Generator() = default;
    Generator(const GeneratorConfig& cfg, Rng& rng);

    // [N,3,H,W] -> [N,3,H,W] residual correction (zero at init).
    Tensor operator()(const Tensor& n_prime) const;
    void collect(const std::string& prefix, ParamStore& out) const;
    const GeneratorConfig& config() const { return cfg_; }

private:
    struct ConvPair {
        Conv2d a, b;
    };

    GeneratorConfig cfg_;
    std::vector<ConvPair> enc_;
    ConvPair bottom_;
    std::vector<ConvPair> dec_;
    Conv2d out_;
};

// ñ = G(n') + n'.
Tensor refine(const Generator& gen, const Tensor& n_prime);

// Scalar-per-sample critic over the 6-channel concatenation of a clean image
// and a noise field. VGG-style: stacked 3x3 stages with pooling, then global
// average pooling and a dense head.
struct CriticConfig {
    std::vector<int64_t> stage_channels = {32, 64, 96, 128};
};

class VggCritic {
public:
    VggCritic() = default;
    VggCritic(const CriticConfig& cfg, Rng& rng);

    // [N,6,H,W] -> [N]; H and W must be divisible by 2^n_stages.
    Tensor operator()(const Tensor& x6) const;
    void collect(const std::string& prefix, ParamStore& out) const;
    const CriticConfig& config() const { return cfg_; }

private:
    struct Stage {
        Conv2d a, b;
    };

    CriticConfig cfg_;
    std::vector<Stage> stages_;
    Dense head_;
};

// Any callable mapping the 6-channel (clean || noise) tensor to one score per
// sample. The losses below are written against this signature so tests can
// substitute analytic critics.
using CriticFn = std::function<Tensor(const Tensor&)>;

struct GanLossWeights {
    double lambda = 0.5;
    double alpha = 10.0;
};

struct GanLossTerms {
    double adv = 0.0;
    double wgan = 0.0;
    double gp = 0.0;
};

// -lambda * mean D(clean || refined). `refined` should already be detached
// from the flow when the caller wants generator-only gradients.
Tensor adversarial_loss(const CriticFn& critic, const Tensor& clean, const Tensor& refined,
                        double lambda = 0.5);

// lambda * (wgan + alpha * gp) where wgan = mean D(fake) - mean D(real) and gp
// is the unit-gradient-norm penalty on per-sample interpolates of the
// 6-channel inputs. Fills `terms` (wgan/gp) when non-null.
Tensor critic_loss(const CriticFn& critic, const Tensor& clean, const Tensor& real_noise,
                   const Tensor& fake_noise, const GanLossWeights& weights, Rng& rng,
                   GanLossTerms* terms = nullptr);

struct SynthesisResult {
    Tensor noise; // continuous refined noise [3,H,W]
    Tensor noisy; // clip(clean + noise, 0, 255) rounded to integers, [3,H,W]
};

// Full synthesis path: pixel-wise sample from the flow, spatial refinement
// when a generator is supplied, then clipping and 8-bit rounding.
SynthesisResult end_to_end_synthesize(const FlowStack& stack, const Generator* gen,
                                      const Tensor& clean, const CameraCondition& cond, Rng& rng);

} // namespace nmfg
