#pragma once

#include <array>
#include <string>
#include <vector>

#include "data/manifest.hpp"

namespace nmfg {

// Fixed-support noise histogram: 130 bins of width 4 covering [-260, 260).
// Values outside the support are counted but carry no probability mass.
struct NoiseHistogram {
    static constexpr int kBins = 130;
    static constexpr double kLo = -260.0;
    static constexpr double kWidth = 4.0;

    std::array<int64_t, kBins> counts{};
    int64_t underflow = 0, overflow = 0, total = 0;

    void add(double v);
    void add_all(const Tensor& t);
    int64_t in_range() const { return total - underflow - overflow; }
};

// KL(real || synth) over the shared 130-bin support. Both histograms are
// normalized to probabilities with 1e-12 additive smoothing per bin, so a bin
// that is empty on one side cannot divide by zero.
double kl_divergence(const NoiseHistogram& real, const NoiseHistogram& synth);

// 10*log10(255^2 / MSE) on the 0-255 scale, capped at 100 dB so identical
// images stay finite in reports.
double psnr(const Tensor& a, const Tensor& b);

// Mean local SSIM over an 11x11 Gaussian window (sigma 1.5) with the standard
// 0-255 stabilizing constants, averaged over channels. Tensors are [C,H,W]
// with H, W >= 11.
double ssim(const Tensor& a, const Tensor& b);

// Pooled noise-value histogram of every clean/noisy pair in the manifest,
// optionally restricted to one (camera, iso) group.
NoiseHistogram noise_histogram(const Manifest& m);
NoiseHistogram noise_histogram(const Manifest& m, const std::string& camera, int iso);

struct KlGroupRow {
    std::string camera;  // "overall" for the pooled row
    int iso = 0;
    double kl = 0.0;
    int64_t real_values = 0, synth_values = 0;
};

// One row per (camera, iso) group present in both manifests, then one pooled
// row across all shared groups.
std::vector<KlGroupRow> kl_report(const Manifest& real, const Manifest& synth);
void write_kl_report_csv(const std::vector<KlGroupRow>& rows, const std::string& path);

} // namespace nmfg
