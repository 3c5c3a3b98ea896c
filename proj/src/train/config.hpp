#pragma once

#include <string>

#include "gan/gan.hpp"

namespace nmfg {

enum class TrainStrategy { Simultaneous, TwoStage, Joint };

const char* train_strategy_name(TrainStrategy s);
TrainStrategy train_strategy_from_name(const std::string& name);

// Full description of a training run. Every field maps to one key in the
// config file and can be overridden with key=value pairs on the command line.
struct TrainConfig {
    TrainStrategy strategy = TrainStrategy::Simultaneous;
    int epochs = 40;
    double lr_initial = 1e-4;
    int lr_halving_period = 10;
    int batch_size = 16;
    double lambda = 0.5;
    double alpha = 10.0;
    bool enable_condlin = true;
    bool enable_sdl = true;
    bool enable_sal = true;
    bool enable_gan = true;
    std::string camera_filter; // empty = keep all cameras
    uint64_t seed = 0;

    int64_t patch_size = 96;
    int64_t patch_stride = 48;
    bool augment = true;
    int steps_per_epoch = 0;  // 0 = one full pass over the training patches
    int val_max_batches = 0;  // 0 = the whole validation split

    int64_t embed_dim = 32;
    int64_t hidden_width = 32;
    int encoder_blocks = 2;
    int flow_repeats = 2;
    int gen_depth = 3;
    int64_t gen_base_channels = 32;
    std::string critic_stages = "32,64,96,128";

    // Consumed by the denoiser trainer only; the noise-model loop ignores them.
    int denoiser_depth = 9;
    int64_t denoiser_channels = 48;
    bool denoiser_residual = true;

    FlowStackConfig flow_config() const;
    GeneratorConfig generator_config() const;
    CriticConfig critic_config() const;

    // Step-size schedule: halved once per lr_halving_period epochs.
    double lr_for_epoch(int epoch) const;

    // Throws ConfigurationError when the combination cannot train.
    void validate() const;
};

// Text config format: one `key = value` per line, '#' starts a comment, keys
// match the TrainConfig field names. Unknown keys are rejected.
TrainConfig parse_train_config_text(const std::string& text);
TrainConfig load_train_config(const std::string& path);
void apply_config_override(TrainConfig& cfg, const std::string& key_equals_value);
std::string dump_train_config(const TrainConfig& cfg);

} // namespace nmfg
