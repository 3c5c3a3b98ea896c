#include "gan/gan.hpp"

#include <array>
#include <cmath>

#include "core/error.hpp"
#include "data/image.hpp"

namespace nmfg {

namespace {

// Noise fields span roughly [-260, 260]; this brings them to unit order on
// the way into the networks and back out.
constexpr double kNoiseScale = 64.0;
constexpr double kLeakySlope = 0.2;

void check_noise_field(const Tensor& t, const char* what) {
    if (t.rank() != 4 || t.dim(1) != 3)
        throw validation_error(std::string(what) + " must be [N,3,H,W]");
}

} // namespace

Generator::Generator(const GeneratorConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.depth < 2) throw config_error("generator depth must be at least 2");
    if (cfg.base_channels <= 0) throw config_error("base_channels must be positive");
    int64_t b = cfg.base_channels;
    enc_.resize(size_t(cfg.depth));
    for (int l = 0; l < cfg.depth; ++l) {
        int64_t cin = l == 0 ? 3 : b << (l - 1);
        int64_t cout = b << l;
        enc_[size_t(l)].a = Conv2d(cin, cout, 3, 1, 1.0, rng);
        enc_[size_t(l)].b = Conv2d(cout, cout, 3, 1, 1.0, rng);
    }
    int64_t cbot = b << cfg.depth;
    bottom_.a = Conv2d(b << (cfg.depth - 1), cbot, 3, 1, 1.0, rng);
    bottom_.b = Conv2d(cbot, cbot, 3, 1, 1.0, rng);
    dec_.resize(size_t(cfg.depth));
    for (int i = 0; i < cfg.depth; ++i) {
        int l = cfg.depth - 1 - i;  // deepest level decoded first
        int64_t skip = b << l;
        int64_t carried = i == 0 ? cbot : b << (l + 1);
        dec_[size_t(i)].a = Conv2d(carried + skip, skip, 3, 1, 1.0, rng);
        dec_[size_t(i)].b = Conv2d(skip, skip, 3, 1, 1.0, rng);
    }
    out_ = Conv2d(b, 3, 1, 0, 0.0, rng);
}

Tensor Generator::operator()(const Tensor& n_prime) const {
    check_noise_field(n_prime, "generator input");
    int64_t h = n_prime.dim(2), w = n_prime.dim(3);
    int64_t m = int64_t(1) << cfg_.depth;
    int64_t pb = (m - h % m) % m, pr = (m - w % m) % m;

    Tensor x = mul_scalar(n_prime, 1.0 / kNoiseScale);
    if (pb > 0 || pr > 0) x = pad_reflect(x, 0, pb, 0, pr);

    std::vector<Tensor> skips;
    skips.reserve(size_t(cfg_.depth));
    for (const auto& pair : enc_) {
        x = relu(pair.b(relu(pair.a(x))));
        skips.push_back(x);
        x = avgpool2(x);
    }
    x = relu(bottom_.b(relu(bottom_.a(x))));
    for (size_t i = 0; i < dec_.size(); ++i) {
        x = concat_c(upsample2(x), skips[skips.size() - 1 - i]);
        x = relu(dec_[i].b(relu(dec_[i].a(x))));
    }
    Tensor corr = mul_scalar(out_(x), kNoiseScale);
    if (pb > 0 || pr > 0) corr = crop_hw(corr, 0, 0, h, w);
    if (!corr.all_finite()) throw numerical_error("generator produced non-finite values");
    return corr;
}

void Generator::collect(const std::string& prefix, ParamStore& out) const {
    for (size_t l = 0; l < enc_.size(); ++l) {
        enc_[l].a.collect(prefix + ".enc" + std::to_string(l) + ".a", out);
        enc_[l].b.collect(prefix + ".enc" + std::to_string(l) + ".b", out);
    }
    bottom_.a.collect(prefix + ".bottom.a", out);
    bottom_.b.collect(prefix + ".bottom.b", out);
    for (size_t i = 0; i < dec_.size(); ++i) {
        dec_[i].a.collect(prefix + ".dec" + std::to_string(i) + ".a", out);
        dec_[i].b.collect(prefix + ".dec" + std::to_string(i) + ".b", out);
    }
    out_.collect(prefix + ".out", out);
}

Tensor refine(const Generator& gen, const Tensor& n_prime) {
    return add(gen(n_prime), n_prime);
}

VggCritic::VggCritic(const CriticConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.stage_channels.empty()) throw config_error("critic needs at least one stage");
    int64_t cin = 6;
    for (int64_t c : cfg.stage_channels) {
        if (c <= 0) throw config_error("stage channels must be positive");
        Stage st;
        st.a = Conv2d(cin, c, 3, 1, 1.0, rng);
        st.b = Conv2d(c, c, 3, 1, 1.0, rng);
        stages_.push_back(st);
        cin = c;
    }
    head_ = Dense(cin, 1, 1.0, rng);
}

Tensor VggCritic::operator()(const Tensor& x6) const {
    if (x6.rank() != 4 || x6.dim(1) != 6)
        throw validation_error("critic input must be [N,6,H,W]");
    int64_t div = int64_t(1) << stages_.size();
    if (x6.dim(2) % div != 0 || x6.dim(3) % div != 0)
        throw validation_error("critic input dims must be divisible by 2^stages");

    std::vector<double> sc(6, 1.0 / 255.0);
    for (int i = 3; i < 6; ++i) sc[size_t(i)] = 1.0 / kNoiseScale;
    Tensor x = mul(x6, bcast_c(Tensor::from_data({6}, sc), x6.dim(0), x6.dim(2), x6.dim(3)));

    for (const auto& st : stages_)
        x = avgpool2(leaky_relu(st.b(leaky_relu(st.a(x), kLeakySlope)), kLeakySlope));
    Tensor pooled = mul_scalar(sum_hw(x), 1.0 / double(x.dim(2) * x.dim(3)));
    Tensor score = reshape(head_(pooled), {x6.dim(0)});
    if (!score.all_finite()) throw numerical_error("critic produced non-finite values");
    return score;
}

void VggCritic::collect(const std::string& prefix, ParamStore& out) const {
    for (size_t i = 0; i < stages_.size(); ++i) {
        stages_[i].a.collect(prefix + ".stage" + std::to_string(i) + ".a", out);
        stages_[i].b.collect(prefix + ".stage" + std::to_string(i) + ".b", out);
    }
    head_.collect(prefix + ".head", out);
}

Tensor adversarial_loss(const CriticFn& critic, const Tensor& clean, const Tensor& refined,
                        double lambda) {
    check_noise_field(clean, "clean");
    check_noise_field(refined, "refined noise");
    Tensor score = critic(concat_c(clean, refined));
    return mul_scalar(mean_all(score), -lambda);
}

Tensor critic_loss(const CriticFn& critic, const Tensor& clean, const Tensor& real_noise,
                   const Tensor& fake_noise, const GanLossWeights& weights, Rng& rng,
                   GanLossTerms* terms) {
    check_noise_field(clean, "clean");
    check_noise_field(real_noise, "real noise");
    check_noise_field(fake_noise, "fake noise");
    if (real_noise.shape() != clean.shape() || fake_noise.shape() != clean.shape())
        throw validation_error("critic_loss inputs must share one shape");

    if (!grad_mode::enabled())
        throw config_error("critic_loss needs gradient recording enabled");

    Tensor real6 = concat_c(clean, real_noise);
    Tensor fake6 = concat_c(clean, fake_noise);
    Tensor wgan = sub(mean_all(critic(fake6)), mean_all(critic(real6)));

    int64_t n = clean.dim(0);
    std::vector<double> eps(static_cast<size_t>(n));
    for (auto& e : eps) e = rng.uniform();
    Tensor eps_t = Tensor::from_data({n}, eps);
    Tensor mixed = add(mul(real6, bcast_sample(eps_t, real6.shape())),
                       mul(fake6, bcast_sample(add_scalar(neg(eps_t), 1.0), fake6.shape())));
    Tensor x_hat = mixed.detached_param();

    Tensor score = critic(x_hat);
    Tensor g;
    if (score.requires_grad()) {
        std::vector<Tensor> wrt{x_hat};
        g = gradients(sum_all(score), wrt, /*create_graph=*/true)[0];
    }
    // A critic that ignores its input has an exactly zero gradient field.
    if (!g.defined()) g = Tensor::zeros(x_hat.shape());
    Tensor norm = sqrt(add_scalar(sum_per_sample(square(g)), 1e-12));
    Tensor gp = mean_all(square(add_scalar(norm, -1.0)));

    Tensor total = mul_scalar(add(wgan, mul_scalar(gp, weights.alpha)), weights.lambda);
    if (!total.all_finite()) throw numerical_error("non-finite critic loss");
    if (terms) {
        terms->wgan = wgan.item();
        terms->gp = gp.item();
    }
    return total;
}

SynthesisResult end_to_end_synthesize(const FlowStack& stack, const Generator* gen,
                                      const Tensor& clean, const CameraCondition& cond,
                                      Rng& rng) {
    NoGradGuard ng;
    if (clean.rank() != 3 || clean.dim(0) != 3) throw validation_error("clean must be [3,H,W]");
    Tensor n_prime = stack.sample_one(clean, cond, rng);
    Tensor noise = n_prime;
    if (gen) {
        Tensor batched = reshape(n_prime, {1, 3, clean.dim(1), clean.dim(2)});
        noise = reshape(refine(*gen, batched), clean.shape());
    }
    std::vector<double> ny(size_t(clean.numel()));
    const double* pc = clean.data();
    const double* pn = noise.data();
    for (int64_t i = 0; i < clean.numel(); ++i) ny[size_t(i)] = quantize_pixel(pc[i] + pn[i]);
    return {noise, Tensor::from_data(clean.shape(), std::move(ny))};
}

} // namespace nmfg
