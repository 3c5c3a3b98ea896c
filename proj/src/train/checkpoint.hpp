#pragma once

#include <optional>
#include <string>

#include "gan/gan.hpp"

namespace nmfg {

// Everything a training run produces and synthesis consumes. The flow is
// always present; generator and critic exist only when adversarial refinement
// is enabled.
struct ModelBundle {
    FlowStack flow;
    std::optional<Generator> gen;
    std::optional<VggCritic> critic;
    GeneratorConfig gen_cfg;
    CriticConfig critic_cfg;
    ParamStore gen_params, critic_params;

    bool has_gan() const { return gen.has_value(); }
};

ModelBundle build_models(const ConditionRegistry& registry, const FlowStackConfig& flow_cfg,
                         bool enable_gan, const GeneratorConfig& gen_cfg,
                         const CriticConfig& critic_cfg, uint64_t seed);

// Optimizer and progress state stored alongside the weights so a run can be
// resumed at an epoch boundary with an identical continuation.
struct TrainState {
    int32_t next_epoch = 0;
    int64_t step = 0;
    double best_val_nll = 0.0;
    bool has_best = false;
    std::string adam_flow, adam_gen, adam_critic;  // serialized optimizer blobs
};

// Versioned binary container: registries, layer specs, component configs and
// named weight tensors with shapes. Loading rebuilds the models and fails
// loudly on any name or shape mismatch.
void save_checkpoint(const std::string& path, const ModelBundle& models,
                     const TrainState* state = nullptr);
ModelBundle load_checkpoint(const std::string& path, TrainState* state = nullptr);

// Shared encoding of one named-weights section, reused by every checkpoint
// container in the project. Reading matches names and shapes against the
// already-constructed store and fails loudly on any mismatch.
void write_weight_section(std::ostream& out, const ParamStore& params);
void read_weight_section(std::istream& in, ParamStore& params, const std::string& section,
                         const std::string& path);

// Container version this build writes; recorded in run.meta artifacts.
uint32_t checkpoint_format_version();

} // namespace nmfg
