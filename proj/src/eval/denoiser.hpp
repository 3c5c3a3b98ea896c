#pragma once

#include <string>
#include <vector>

#include "train/train.hpp"

namespace nmfg {

// Plain convolutional denoiser in the DnCNN mold: a 3x3 conv stack with relu
// between layers. With residual prediction (the default) the network outputs
// an estimate of the noise and the denoised image is input minus estimate.
struct DenoiserSpec {
    int depth = 9;
    int64_t channels = 48;
    bool residual = true;
    bool operator==(const DenoiserSpec&) const = default;
};

class Denoiser {
public:
    Denoiser() = default;
    Denoiser(const DenoiserSpec& spec, Rng& rng);

    // [N,3,H,W] noisy, 0-255 -> denoised, same shape, unclipped.
    Tensor operator()(const Tensor& noisy) const;
    // Single image [3,H,W], clipped to [0,255] for metric use.
    Tensor denoise_image(const Tensor& noisy) const;

    void collect(const std::string& prefix, ParamStore& out) const;
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const DenoiserSpec& spec() const { return spec_; }

private:
    DenoiserSpec spec_;
    std::vector<Conv2d> convs_;
    ParamStore params_;
};

void save_denoiser(const std::string& path, const Denoiser& d);
Denoiser load_denoiser(const std::string& path);

// Container version this build writes; recorded in run.meta artifacts.
uint32_t denoiser_format_version();

struct DenoiserTrainResult {
    std::string checkpoint;  // best-by-validation-PSNR weights
    int64_t steps = 0;
    std::vector<double> val_psnr_per_epoch;
    double best_val_psnr = 0.0;
};

// Supervised L2 residual regression on clean/noisy pairs, with the same
// patching, scene split, shuffling and augmentation as the noise-model loop.
// Reuses TrainConfig's data and schedule fields; the flow/GAN fields are
// ignored.
DenoiserTrainResult train_denoiser(const DenoiserSpec& spec, const Manifest& manifest,
                                   const TrainConfig& cfg, const std::string& out_dir);

struct DenoiserEvalResult {
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    int64_t images = 0;
};

// Full-image evaluation over every pair in the manifest, in manifest order.
// Outputs are clipped to [0,255] before metrics. When csv_path is non-empty,
// writes one `image_id,psnr,ssim` row per image.
DenoiserEvalResult evaluate_denoiser(const Denoiser& d, const Manifest& test,
                                     const std::string& csv_path = "");

} // namespace nmfg
