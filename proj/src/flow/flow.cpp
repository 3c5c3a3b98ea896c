#include "flow/flow.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace nmfg {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274;  // ln(2*pi)/2

void check_factor_finite(const Tensor& raw) {
    if (!raw.all_finite()) throw numerical_error("factor network produced non-finite values");
}

} // namespace

const char* flow_layer_kind_name(FlowLayerKind k) {
    switch (k) {
        case FlowLayerKind::CondLin: return "condlin";
        case FlowLayerKind::Sdl: return "sdl";
        case FlowLayerKind::Sal: return "sal";
    }
    throw config_error("unknown flow layer kind");
}

FlowLayerKind flow_layer_kind_from_name(const std::string& name) {
    if (name == "condlin") return FlowLayerKind::CondLin;
    if (name == "sdl") return FlowLayerKind::Sdl;
    if (name == "sal") return FlowLayerKind::Sal;
    throw config_error("unknown flow layer kind: " + name);
}

FlowLayer::FlowLayer(const FlowLayerSpec& spec, int64_t embed_dim, Rng& rng) : spec_(spec) {
    if (spec.hidden_width <= 0) throw config_error("hidden_width must be positive");
    double out_scale = spec.zero_init_output ? 0.0 : 1.0;
    int64_t cin = 3 + embed_dim;
    switch (spec.kind) {
        case FlowLayerKind::CondLin:
            dense_hidden_ = Dense(embed_dim, spec.hidden_width, 1.0, rng);
            dense_out_ = Dense(spec.hidden_width, 6, out_scale, rng);
            break;
        case FlowLayerKind::Sdl:
            conv1_ = Conv2d(cin, spec.hidden_width, 1, 0, 1.0, rng);
            conv2_ = Conv2d(spec.hidden_width, spec.hidden_width, 1, 0, 1.0, rng);
            conv_out_ = Conv2d(spec.hidden_width, 6, 1, 0, out_scale, rng);
            break;
        case FlowLayerKind::Sal:
            conv1_ = Conv2d(cin, spec.hidden_width, 3, 1, 1.0, rng);
            conv2_ = Conv2d(spec.hidden_width, spec.hidden_width, 3, 1, 1.0, rng);
            conv_out_ = Conv2d(spec.hidden_width, 6, 1, 0, out_scale, rng);
            break;
    }
}

std::pair<Tensor, Tensor> FlowLayer::factors(const FlowContext& ctx) const {
    int64_t h = ctx.clean.dim(2), w = ctx.clean.dim(3);
    Tensor raw;
    switch (spec_.kind) {
        case FlowLayerKind::CondLin: {
            Tensor f = dense_out_(tanh(dense_hidden_(ctx.embedding)));  // [N,6]
            check_factor_finite(f);
            int64_t n = f.dim(0);
            Tensor f4 = reshape(f, {n, 6, 1, 1});
            Tensor ls = reshape(slice_c(f4, 0, 3), {n, 3});
            Tensor b = reshape(slice_c(f4, 3, 6), {n, 3});
            return {clamp(bcast_nc(ls, h, w), -kLogScaleBound, kLogScaleBound),
                    bcast_nc(b, h, w)};
        }
        case FlowLayerKind::Sdl:
            raw = conv_out_(tanh(pixel_norm(conv2_(tanh(pixel_norm(conv1_(ctx.features)))))));
            break;
        case FlowLayerKind::Sal:
            raw = conv_out_(tanh(conv2_(tanh(conv1_(ctx.features)))));
            break;
    }
    check_factor_finite(raw);
    return {clamp(slice_c(raw, 0, 3), -kLogScaleBound, kLogScaleBound), slice_c(raw, 3, 6)};
}

Tensor FlowLayer::forward(const Tensor& z, const FlowContext& ctx, Tensor* log_det) const {
    auto [ls, b] = factors(ctx);
    if (log_det) {
        Tensor ld = sum_per_sample(ls);
        *log_det = log_det->defined() ? add(*log_det, ld) : ld;
    }
    return add(mul(z, exp(ls)), b);
}

Tensor FlowLayer::inverse(const Tensor& z_next, const FlowContext& ctx) const {
    auto [ls, b] = factors(ctx);
    return mul(sub(z_next, b), exp(neg(ls)));
}

void FlowLayer::collect(const std::string& prefix, ParamStore& out) const {
    switch (spec_.kind) {
        case FlowLayerKind::CondLin:
            dense_hidden_.collect(prefix + ".hidden", out);
            dense_out_.collect(prefix + ".out", out);
            break;
        case FlowLayerKind::Sdl:
        case FlowLayerKind::Sal:
            conv1_.collect(prefix + ".conv1", out);
            conv2_.collect(prefix + ".conv2", out);
            conv_out_.collect(prefix + ".out", out);
            break;
    }
}

std::vector<FlowLayerSpec> FlowStackConfig::layer_specs() const {
    std::vector<FlowLayerSpec> specs;
    for (int r = 0; r < repeats; ++r) {
        if (enable_condlin) specs.push_back({FlowLayerKind::CondLin, hidden_width, true});
        if (enable_sdl) specs.push_back({FlowLayerKind::Sdl, hidden_width, true});
        if (enable_sal) specs.push_back({FlowLayerKind::Sal, hidden_width, true});
    }
    return specs;
}

FlowStack::FlowStack(const ConditionRegistry& registry, const FlowStackConfig& cfg, Rng& rng)
    : cfg_(cfg) {
    if (cfg.repeats < 0) throw config_error("repeats must be nonnegative");
    encoder_ = ConditionEncoder(registry, {cfg.embed_dim, cfg.encoder_blocks}, rng);
    specs_ = cfg.layer_specs();
    layers_.reserve(specs_.size());
    for (const auto& spec : specs_) layers_.emplace_back(spec, cfg.embed_dim, rng);

    encoder_.collect("encoder", params_);
    for (size_t i = 0; i < layers_.size(); ++i) {
        std::string prefix =
            "layer" + std::to_string(i) + "." + flow_layer_kind_name(specs_[i].kind);
        layers_[i].collect(prefix, params_);
    }
}

FlowContext FlowStack::make_context(const Tensor& clean,
                                    const std::vector<CameraCondition>& conds) const {
    if (clean.rank() != 4 || clean.dim(1) != 3)
        throw validation_error("clean must be [N,3,H,W]");
    if (int64_t(conds.size()) != clean.dim(0))
        throw validation_error("one condition per sample required");
    FlowContext ctx;
    ctx.clean = clean;
    ctx.embedding = encoder_(conds);
    ctx.features = concat_c(mul_scalar(clean, 1.0 / 255.0),
                            bcast_nc(ctx.embedding, clean.dim(2), clean.dim(3)));
    return ctx;
}

Tensor FlowStack::forward(const Tensor& noise, const FlowContext& ctx, Tensor* log_det) const {
    Tensor z = noise;
    for (const auto& layer : layers_) z = layer.forward(z, ctx, log_det);
    if (log_det && !log_det->defined()) *log_det = Tensor::zeros({noise.dim(0)});
    return z;
}

Tensor FlowStack::inverse(const Tensor& z, const FlowContext& ctx) const {
    Tensor n = z;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) n = it->inverse(n, ctx);
    return n;
}

Tensor FlowStack::nll(const Tensor& noise, const FlowContext& ctx) const {
    Tensor log_det;
    Tensor z = forward(noise, ctx, &log_det);
    int64_t per_sample_elems = noise.numel() / noise.dim(0);
    Tensor per = add_scalar(mul_scalar(sum_per_sample(square(z)), 0.5),
                            kHalfLog2Pi * double(per_sample_elems));
    per = sub(per, log_det);
    Tensor out = mean_all(per);
    if (!out.all_finite()) throw numerical_error("non-finite likelihood");
    return out;
}

Tensor FlowStack::sample(const Tensor& clean, const std::vector<CameraCondition>& conds,
                         Rng& rng) const {
    FlowContext ctx = make_context(clean, conds);
    std::vector<double> zvals(size_t(clean.numel()));
    rng.fill_normal(zvals.data(), zvals.size());
    Tensor z = Tensor::from_data(clean.shape(), std::move(zvals));
    return inverse(z, ctx);
}

Tensor FlowStack::sample_one(const Tensor& clean, const CameraCondition& cond, Rng& rng) const {
    if (clean.rank() != 3 || clean.dim(0) != 3) throw validation_error("clean must be [3,H,W]");
    Tensor batched = reshape(clean, {1, 3, clean.dim(1), clean.dim(2)});
    Tensor out = sample(batched, {cond}, rng);
    return reshape(out, clean.shape());
}

PixelGaussianStats FlowStack::pixel_stats(const Tensor& clean, const CameraCondition& cond,
                                          int n_samples, Rng& rng) const {
    if (clean.rank() != 3 || clean.dim(0) != 3) throw validation_error("clean must be [3,H,W]");
    if (n_samples < 100) throw validation_error("pixel_stats needs at least 100 samples");
    NoGradGuard ng;
    int64_t elems = clean.numel();
    std::vector<double> sum(size_t(elems), 0.0), sumsq(size_t(elems), 0.0);
    for (int s = 0; s < n_samples; ++s) {
        Tensor draw = sample_one(clean, cond, rng);
        const double* p = draw.data();
        for (int64_t i = 0; i < elems; ++i) {
            sum[size_t(i)] += p[i];
            sumsq[size_t(i)] += p[i] * p[i];
        }
    }
    std::vector<double> mean(static_cast<size_t>(elems)), sd(static_cast<size_t>(elems));
    for (int64_t i = 0; i < elems; ++i) {
        double m = sum[size_t(i)] / n_samples;
        double var = (sumsq[size_t(i)] - n_samples * m * m) / (n_samples - 1);
        mean[size_t(i)] = m;
        sd[size_t(i)] = std::sqrt(std::max(var, 0.0));
    }
    return {Tensor::from_data(clean.shape(), std::move(mean)),
            Tensor::from_data(clean.shape(), std::move(sd))};
}

Tensor dequantize(const Tensor& noise, Rng& rng) {
    const double* p = noise.data();
    std::vector<double> out(size_t(noise.numel()));
    for (size_t i = 0; i < out.size(); ++i) out[i] = p[i] + (rng.uniform() - 0.5);
    return Tensor::from_data(noise.shape(), std::move(out));
}

} // namespace nmfg
