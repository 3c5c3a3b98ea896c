#pragma once

#include <string>
#include <vector>

#include "core/nn.hpp"
#include "data/manifest.hpp"

namespace nmfg {

struct ConditionEncoderConfig {
    int64_t embed_dim = 32;
    int n_blocks = 2;
};

// Maps a (camera, iso) pair to a learned embedding vector. The pair is encoded
// as the concatenation of two one-hot codes over the registry; a dense layer
// lifts that to the embedding width and residual blocks refine it. The output
// depends only on the pair and the weights, so equal pairs always embed
// identically.
class ConditionEncoder {
public:
    ConditionEncoder() = default;
    ConditionEncoder(const ConditionRegistry& registry, const ConditionEncoderConfig& cfg,
                     Rng& rng);

    // [N, onehot_size]; throws UnknownCondition for pairs outside the registry.
    Tensor onehot(const std::vector<CameraCondition>& conds) const;
    // [N, embed_dim]
    Tensor operator()(const std::vector<CameraCondition>& conds) const;

    void collect(const std::string& prefix, ParamStore& out) const;

    const ConditionRegistry& registry() const { return registry_; }
    int64_t embed_dim() const { return cfg_.embed_dim; }
    const ConditionEncoderConfig& config() const { return cfg_; }

private:
    struct Block {
        Dense a, b;
    };

    ConditionRegistry registry_;
    ConditionEncoderConfig cfg_;
    Dense input_;
    std::vector<Block> blocks_;
};

} // namespace nmfg
