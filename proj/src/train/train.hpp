#pragma once

#include <string>
#include <vector>

#include "data/patches.hpp"
#include "train/checkpoint.hpp"
#include "train/config.hpp"

namespace nmfg {

// One training example: a clean patch, the integer noise observed on it and
// the capture condition it came from.
struct TrainPatch {
    Tensor clean;  // [3,ps,ps]
    Tensor noise;  // [3,ps,ps], noisy - clean
    CameraCondition condition;
};

struct PatchSet {
    std::vector<TrainPatch> train, val;
    ConditionRegistry registry;
    int n_train_scenes = 0, n_val_scenes = 0;
};

// Loads pairs, applies the camera filter, splits scenes 80/20 with a
// seed-derived shuffle and cuts both splits into regular patch grids.
PatchSet assemble_patches(const Manifest& manifest, const TrainConfig& cfg);

struct TrainResult {
    std::string last_checkpoint;
    std::string best_checkpoint;
    int epochs_run = 0;
    int64_t steps = 0;
    double best_val_nll = 0.0;
    std::vector<double> val_nll_per_epoch;
};

// Total epochs a run executes: the two-stage strategy appends a second,
// adversarial-only pass of the same length after the flow pass.
int total_epochs(const TrainConfig& cfg);

// Runs the full loop: per-epoch shuffled batches, the per-strategy step
// order, validation NLL after every epoch, ckpt_epoch{N}.bin plus
// ckpt_best.bin in out_dir, and step-level TSV logs. Throws DivergedError on
// non-finite losses; checkpoints already written stay on disk.
TrainResult train(const TrainConfig& cfg, const Manifest& manifest, const std::string& out_dir);

// Continues a checkpointed run. The config must describe the same model; the
// loop picks up at the recorded epoch with the recorded optimizer state, so a
// resumed run reproduces the uninterrupted one.
TrainResult resume_training(const TrainConfig& cfg, const Manifest& manifest,
                            const std::string& out_dir, const std::string& checkpoint_path);

enum class ConditionPolicy { Fixed, Uniform, FromManifest };

struct DenoiserDatasetOptions {
    ConditionPolicy policy = ConditionPolicy::Uniform;
    CameraCondition fixed;  // used only by the fixed policy
    uint64_t seed = 0;
};

// Synthesizes a paired denoiser-training set from clean images: every source
// image gets a condition (fixed, drawn uniformly over the registry, or taken
// from its own manifest row), a synthesized noisy counterpart and a manifest
// row in out_dir.
Manifest make_denoiser_dataset(const ModelBundle& models, const Manifest& clean_manifest,
                               const DenoiserDatasetOptions& opt, const std::string& out_dir);

} // namespace nmfg
