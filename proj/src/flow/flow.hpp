#pragma once

#include <string>
#include <utility>
#include <vector>

#include "flow/condition.hpp"

namespace nmfg {

// The three conditional affine layer kinds, distinguished by what their factor
// networks may look at: CondLin sees only the condition embedding, Sdl adds the
// clean intensity of the pixel itself, Sal adds a bounded spatial neighborhood
// of the clean image.
enum class FlowLayerKind { CondLin, Sdl, Sal };

const char* flow_layer_kind_name(FlowLayerKind k);
FlowLayerKind flow_layer_kind_from_name(const std::string& name);

struct FlowLayerSpec {
    FlowLayerKind kind = FlowLayerKind::CondLin;
    int64_t hidden_width = 32;
    bool zero_init_output = true;
    bool operator==(const FlowLayerSpec&) const = default;
};

// Everything the factor networks may condition on. They never read the tensor
// being transformed, which keeps every layer's Jacobian diagonal and the
// log-determinant an elementwise sum of log scales.
struct FlowContext {
    Tensor clean;      // [N,3,H,W], 0-255
    Tensor embedding;  // [N,E]
    Tensor features;   // [N,3+E,H,W]: clean/255 concatenated with the broadcast embedding
};

// Log scales are clamped to this symmetric bound in both the forward and the
// inverse direction, so clamping never breaks invertibility.
constexpr double kLogScaleBound = 8.0;

// Side length of the clean-image neighborhood a Sal factor may depend on
// (two stacked 3x3 stages).
constexpr int64_t kSalNeighborhood = 5;

class FlowLayer {
public:
    FlowLayer() = default;
    FlowLayer(const FlowLayerSpec& spec, int64_t embed_dim, Rng& rng);

    // (log_scale, bias), each [N,3,H,W]. log_scale comes back already clamped.
    std::pair<Tensor, Tensor> factors(const FlowContext& ctx) const;

    // z -> z * exp(log_scale) + bias. When log_det is non-null the per-sample
    // sum of log scales is added into it ([N], created if undefined).
    Tensor forward(const Tensor& z, const FlowContext& ctx, Tensor* log_det) const;
    // Exact inverse: (z_next - bias) * exp(-log_scale).
    Tensor inverse(const Tensor& z_next, const FlowContext& ctx) const;

    void collect(const std::string& prefix, ParamStore& out) const;
    const FlowLayerSpec& spec() const { return spec_; }

private:
    FlowLayerSpec spec_;
    Dense dense_hidden_, dense_out_;  // CondLin
    Conv2d conv1_, conv2_, conv_out_; // Sdl / Sal
};

struct FlowStackConfig {
    int64_t embed_dim = 32;
    int64_t hidden_width = 32;
    int encoder_blocks = 2;
    int repeats = 2;
    bool enable_condlin = true;
    bool enable_sdl = true;
    bool enable_sal = true;

    std::vector<FlowLayerSpec> layer_specs() const;
};

struct PixelGaussianStats {
    Tensor mean; // [3,H,W]
    Tensor std;  // [3,H,W]
};

// An ordered stack of conditional affine layers plus the condition encoder.
// Forward maps noise to the latent z whose density is standard normal per
// element; inverse maps latent draws back to noise.
class FlowStack {
public:
    FlowStack() = default;
    FlowStack(const ConditionRegistry& registry, const FlowStackConfig& cfg, Rng& rng);

    FlowContext make_context(const Tensor& clean, const std::vector<CameraCondition>& conds) const;

    Tensor forward(const Tensor& noise, const FlowContext& ctx, Tensor* log_det) const;
    Tensor inverse(const Tensor& z, const FlowContext& ctx) const;

    // Mean negative log-likelihood over the batch, [1].
    Tensor nll(const Tensor& noise, const FlowContext& ctx) const;

    // Draws z from the per-element standard normal and pushes it through the
    // inverse stack. clean is [N,3,H,W] with one condition per sample.
    Tensor sample(const Tensor& clean, const std::vector<CameraCondition>& conds, Rng& rng) const;
    // Single-image convenience: clean [3,H,W] -> noise [3,H,W].
    Tensor sample_one(const Tensor& clean, const CameraCondition& cond, Rng& rng) const;

    // Monte-Carlo per-pixel mean/std of the pushed-forward base distribution.
    PixelGaussianStats pixel_stats(const Tensor& clean, const CameraCondition& cond,
                                   int n_samples, Rng& rng) const;

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const std::vector<FlowLayerSpec>& layer_specs() const { return specs_; }
    const FlowStackConfig& config() const { return cfg_; }
    const ConditionRegistry& registry() const { return encoder_.registry(); }
    const ConditionEncoder& encoder() const { return encoder_; }
    const FlowLayer& layer(size_t i) const { return layers_[i]; }
    size_t n_layers() const { return layers_.size(); }

private:
    FlowStackConfig cfg_;
    ConditionEncoder encoder_;
    std::vector<FlowLayerSpec> specs_;
    std::vector<FlowLayer> layers_;
    ParamStore params_;
};

// Training-time dequantization: adds u ~ U[-0.5, 0.5) per element, so rounding
// to the nearest integer recovers the original integer-valued noise exactly.
Tensor dequantize(const Tensor& noise, Rng& rng);

} // namespace nmfg
