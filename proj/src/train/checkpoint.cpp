#include "train/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "core/error.hpp"
#include "train/binio.hpp"

namespace nmfg {

namespace {

constexpr char kMagic[4] = {'N', 'M', 'F', 'G'};
constexpr uint32_t kVersion = 1;

} // namespace

void write_weight_section(std::ostream& out, const ParamStore& params) {
    wr_u32(out, static_cast<uint32_t>(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        wr_str(out, params.name(i));
        const Tensor& t = params.tensor(i);
        wr_u32(out, static_cast<uint32_t>(t.rank()));
        for (int r = 0; r < t.rank(); ++r) wr_i64(out, t.dim(r));
        wr_bytes(out, t.data(), static_cast<size_t>(t.numel()) * sizeof(double));
    }
}

void read_weight_section(std::istream& in, ParamStore& params, const std::string& section,
                         const std::string& path) {
    uint32_t n = rd_u32(in, path);
    if (n != params.size())
        throw format_error("checkpoint " + section + " section has " + std::to_string(n) +
                                   " tensors, model expects " + std::to_string(params.size()));
    for (uint32_t i = 0; i < n; ++i) {
        std::string name = rd_str(in, path);
        if (name != params.name(i))
            throw format_error("checkpoint " + section + " tensor " + std::to_string(i) +
                                       " is '" + name + "', model expects '" + params.name(i) + "'");
        uint32_t rank = rd_u32(in, path);
        Shape shape;
        for (uint32_t r = 0; r < rank; ++r) shape.push_back(rd_i64(in, path));
        Tensor& t = params.tensor(i);
        if (shape != t.shape())
            throw format_error("checkpoint tensor '" + name + "' shape mismatch");
        rd_bytes(in, t.data(), static_cast<size_t>(t.numel()) * sizeof(double), path);
    }
}

ModelBundle build_models(const ConditionRegistry& registry, const FlowStackConfig& flow_cfg,
                         bool enable_gan, const GeneratorConfig& gen_cfg,
                         const CriticConfig& critic_cfg, uint64_t seed) {
    ModelBundle m;
    // Separate construction streams: toggling the GAN on or off must leave the
    // flow's initial weights untouched.
    Rng rng_flow(derive_seed(seed, static_cast<uint64_t>(StreamRole::Init), 1));
    m.flow = FlowStack(registry, flow_cfg, rng_flow);
    if (enable_gan) {
        Rng rng_gan(derive_seed(seed, static_cast<uint64_t>(StreamRole::Init), 2));
        m.gen_cfg = gen_cfg;
        m.critic_cfg = critic_cfg;
        m.gen.emplace(gen_cfg, rng_gan);
        m.critic.emplace(critic_cfg, rng_gan);
        m.gen->collect("g", m.gen_params);
        m.critic->collect("d", m.critic_params);
    }
    return m;
}

void save_checkpoint(const std::string& path, const ModelBundle& models, const TrainState* state) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw not_found("cannot open checkpoint for writing: " + path);

    wr_bytes(out, kMagic, 4);
    wr_u32(out, kVersion);

    const ConditionRegistry& reg = models.flow.registry();
    wr_u32(out, static_cast<uint32_t>(reg.cameras.size()));
    for (const auto& c : reg.cameras) wr_str(out, c);
    wr_u32(out, static_cast<uint32_t>(reg.isos.size()));
    for (int iso : reg.isos) wr_i32(out, iso);

    const FlowStackConfig& fc = models.flow.config();
    wr_i64(out, fc.embed_dim);
    wr_i64(out, fc.hidden_width);
    wr_i32(out, fc.encoder_blocks);
    wr_i32(out, fc.repeats);
    wr_u8(out, fc.enable_condlin ? 1 : 0);
    wr_u8(out, fc.enable_sdl ? 1 : 0);
    wr_u8(out, fc.enable_sal ? 1 : 0);

    const auto& specs = models.flow.layer_specs();
    wr_u32(out, static_cast<uint32_t>(specs.size()));
    for (const auto& s : specs) {
        wr_u8(out, static_cast<uint8_t>(s.kind));
        wr_i64(out, s.hidden_width);
        wr_u8(out, s.zero_init_output ? 1 : 0);
    }

    wr_u8(out, models.has_gan() ? 1 : 0);
    if (models.has_gan()) {
        wr_i32(out, models.gen_cfg.depth);
        wr_i64(out, models.gen_cfg.base_channels);
        wr_u32(out, static_cast<uint32_t>(models.critic_cfg.stage_channels.size()));
        for (int64_t c : models.critic_cfg.stage_channels) wr_i64(out, c);
    }

    write_weight_section(out, models.flow.params());
    write_weight_section(out, models.gen_params);
    write_weight_section(out, models.critic_params);

    wr_u8(out, state ? 1 : 0);
    if (state) {
        wr_i32(out, state->next_epoch);
        wr_i64(out, state->step);
        wr_f64(out, state->best_val_nll);
        wr_u8(out, state->has_best ? 1 : 0);
        wr_str(out, state->adam_flow);
        wr_str(out, state->adam_gen);
        wr_str(out, state->adam_critic);
    }

    out.flush();
    if (!out) throw not_found("write failed for checkpoint: " + path);
}

ModelBundle load_checkpoint(const std::string& path, TrainState* state) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw not_found("cannot open checkpoint: " + path);

    char magic[4];
    rd_bytes(in, magic, 4, path);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw format_error("not a checkpoint file: " + path);
    uint32_t version = rd_u32(in, path);
    if (version != kVersion)
        throw format_error("unsupported checkpoint version " + std::to_string(version));

    ConditionRegistry reg;
    uint32_t n_cam = rd_u32(in, path);
    for (uint32_t i = 0; i < n_cam; ++i) reg.cameras.push_back(rd_str(in, path));
    uint32_t n_iso = rd_u32(in, path);
    for (uint32_t i = 0; i < n_iso; ++i) reg.isos.push_back(rd_i32(in, path));

    FlowStackConfig fc;
    fc.embed_dim = rd_i64(in, path);
    fc.hidden_width = rd_i64(in, path);
    fc.encoder_blocks = rd_i32(in, path);
    fc.repeats = rd_i32(in, path);
    fc.enable_condlin = rd_u8(in, path) != 0;
    fc.enable_sdl = rd_u8(in, path) != 0;
    fc.enable_sal = rd_u8(in, path) != 0;

    uint32_t n_layers = rd_u32(in, path);
    std::vector<FlowLayerSpec> specs;
    for (uint32_t i = 0; i < n_layers; ++i) {
        FlowLayerSpec s;
        uint8_t kind = rd_u8(in, path);
        if (kind > 2) throw format_error("checkpoint has unknown layer kind");
        s.kind = static_cast<FlowLayerKind>(kind);
        s.hidden_width = rd_i64(in, path);
        s.zero_init_output = rd_u8(in, path) != 0;
        specs.push_back(s);
    }
    if (specs != fc.layer_specs())
        throw format_error("checkpoint layer list disagrees with its own flow config");

    bool has_gan = rd_u8(in, path) != 0;
    GeneratorConfig gen_cfg;
    CriticConfig critic_cfg;
    if (has_gan) {
        gen_cfg.depth = rd_i32(in, path);
        gen_cfg.base_channels = rd_i64(in, path);
        uint32_t n_stages = rd_u32(in, path);
        critic_cfg.stage_channels.clear();
        for (uint32_t i = 0; i < n_stages; ++i) critic_cfg.stage_channels.push_back(rd_i64(in, path));
    }

    ModelBundle m = build_models(reg, fc, has_gan, gen_cfg, critic_cfg, 0);
    read_weight_section(in, m.flow.params(), "flow", path);
    read_weight_section(in, m.gen_params, "generator", path);
    read_weight_section(in, m.critic_params, "critic", path);

    bool has_state = rd_u8(in, path) != 0;
    if (state) {
        if (!has_state)
            throw format_error("checkpoint has no training state, cannot resume: " + path);
        state->next_epoch = rd_i32(in, path);
        state->step = rd_i64(in, path);
        state->best_val_nll = rd_f64(in, path);
        state->has_best = rd_u8(in, path) != 0;
        state->adam_flow = rd_str(in, path);
        state->adam_gen = rd_str(in, path);
        state->adam_critic = rd_str(in, path);
    }
    return m;
}

uint32_t checkpoint_format_version() { return kVersion; }

} // namespace nmfg
