#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "data/manifest.hpp"

namespace nmfg {

// Ground-truth parameters of the virtual camera used for oracle datasets:
// per-channel heteroscedastic Gaussian noise, optionally spatially correlated
// by a small normalized kernel, with a per-ISO variance gain.
struct SynthCameraParams {
    std::array<double, 3> beta_s_sq{0.0, 0.0, 0.0};
    std::array<double, 3> beta_c_sq{0.0, 0.0, 0.0};
    int64_t kernel_h = 1, kernel_w = 1;
    std::vector<double> kernel{1.0};  // row-major, must sum to 1
    std::map<int, double> gain_per_iso;

    void validate() const;
    bool identity_kernel() const;

    static SynthCameraParams hetero_only(double bs_sq, double bc_sq,
                                         std::map<int, double> gains);
    // 1x2 kernel [0.5, 0.5]: averages horizontally adjacent source samples,
    // giving lag-1 horizontal correlation 0.5 after renormalization.
    static SynthCameraParams horizontal_pair(double bs_sq, double bc_sq,
                                             std::map<int, double> gains);
};

// Continuous correlated noise for one clean image [3,H,W]. The convolved
// field is rescaled per channel so its average variance matches the average
// of the per-pixel variance field the kernel consumed.
Tensor oracle_noise(const SynthCameraParams& params, const Tensor& clean, int iso, Rng& rng);

// Renders each (clean, condition) pair to PNG files plus manifest.tsv and an
// oracle.meta sidecar recording (params, seed). Bit-identical for identical
// inputs and seed.
Manifest generate_oracle_dataset(const SynthCameraParams& params,
                                 const std::vector<Tensor>& clean_images,
                                 const std::vector<CameraCondition>& conditions,
                                 uint64_t seed, const std::string& out_dir);

// Synthetic clean content: piecewise-constant random blocks (strong edges,
// spatial structure) and per-pixel uniform intensities (flat coverage of the
// whole intensity range). Both emit integer-valued tensors.
Tensor make_blocky_clean(Rng& rng, int64_t h, int64_t w, int64_t block,
                         const std::vector<double>& levels);
Tensor make_uniform_clean(Rng& rng, int64_t h, int64_t w, double lo = 0.0, double hi = 255.0);

// Full description of a generated dataset: the virtual camera plus the clean
// content to render for every (camera, iso, index) triple.
struct OracleGenConfig {
    SynthCameraParams params;
    std::vector<std::string> cameras{"CAM_A"};
    int images_per_condition = 4;
    int64_t height = 64, width = 64;
    std::string content = "blocky";  // or "uniform"
    int64_t block = 8;
    std::vector<double> levels{40.0, 90.0, 160.0, 220.0};
};

// Text config format mirroring the training config: `key = value` lines with
// '#' comments. Lists are comma-separated; beta values accept one number for
// all channels or a per-channel triple; gains are `iso:gain` pairs.
OracleGenConfig parse_oracle_config_text(const std::string& text);
OracleGenConfig load_oracle_config(const std::string& path);
void apply_oracle_override(OracleGenConfig& cfg, const std::string& key_equals_value);
std::string dump_oracle_config(const OracleGenConfig& cfg);

// Renders images_per_condition cleans for every camera x ISO pair and hands
// them to generate_oracle_dataset. Clean content and noise come from separate
// derived streams, so both are reproducible from (config, seed) alone.
Manifest run_oracle_generation(const OracleGenConfig& cfg, uint64_t seed,
                               const std::string& out_dir);

} // namespace nmfg
