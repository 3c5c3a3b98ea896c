#include "flow/condition.hpp"

#include "core/error.hpp"

namespace nmfg {

ConditionEncoder::ConditionEncoder(const ConditionRegistry& registry,
                                   const ConditionEncoderConfig& cfg, Rng& rng)
    : registry_(registry), cfg_(cfg) {
    if (cfg.embed_dim <= 0) throw config_error("embed_dim must be positive");
    if (cfg.n_blocks < 0) throw config_error("n_blocks must be nonnegative");
    if (registry.cameras.empty() || registry.isos.empty())
        throw config_error("condition registry is empty");
    input_ = Dense(registry.onehot_size(), cfg.embed_dim, 1.0, rng);
    blocks_.resize(size_t(cfg.n_blocks));
    for (auto& blk : blocks_) {
        blk.a = Dense(cfg.embed_dim, cfg.embed_dim, 1.0, rng);
        blk.b = Dense(cfg.embed_dim, cfg.embed_dim, 1.0, rng);
    }
}

Tensor ConditionEncoder::onehot(const std::vector<CameraCondition>& conds) const {
    if (conds.empty()) throw validation_error("no conditions supplied");
    int64_t n = int64_t(conds.size());
    int64_t width = registry_.onehot_size();
    std::vector<double> vals(size_t(n * width), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        int ci = registry_.camera_index(conds[size_t(i)].camera);
        int ii = registry_.iso_index(conds[size_t(i)].iso);
        vals[size_t(i * width + ci)] = 1.0;
        vals[size_t(i * width + int64_t(registry_.cameras.size()) + ii)] = 1.0;
    }
    return Tensor::from_data({n, width}, std::move(vals));
}

Tensor ConditionEncoder::operator()(const std::vector<CameraCondition>& conds) const {
    Tensor h = input_(onehot(conds));
    for (const auto& blk : blocks_) h = add(h, blk.b(relu(blk.a(h))));
    return h;
}

void ConditionEncoder::collect(const std::string& prefix, ParamStore& out) const {
    input_.collect(prefix + ".in", out);
    for (size_t i = 0; i < blocks_.size(); ++i) {
        std::string bp = prefix + ".block" + std::to_string(i);
        blocks_[i].a.collect(bp + ".a", out);
        blocks_[i].b.collect(bp + ".b", out);
    }
}

} // namespace nmfg
