#include "train/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "core/error.hpp"

namespace nmfg {

const char* train_strategy_name(TrainStrategy s) {
    switch (s) {
        case TrainStrategy::Simultaneous: return "simultaneous";
        case TrainStrategy::TwoStage: return "two_stage";
        case TrainStrategy::Joint: return "joint";
    }
    return "?";
}

TrainStrategy train_strategy_from_name(const std::string& name) {
    if (name == "simultaneous") return TrainStrategy::Simultaneous;
    if (name == "two_stage") return TrainStrategy::TwoStage;
    if (name == "joint") return TrainStrategy::Joint;
    throw parse_error("unknown strategy '" + name +
                              "' (expected simultaneous, two_stage or joint)");
}

FlowStackConfig TrainConfig::flow_config() const {
    FlowStackConfig fc;
    fc.embed_dim = embed_dim;
    fc.hidden_width = hidden_width;
    fc.encoder_blocks = encoder_blocks;
    fc.repeats = flow_repeats;
    fc.enable_condlin = enable_condlin;
    fc.enable_sdl = enable_sdl;
    fc.enable_sal = enable_sal;
    return fc;
}

GeneratorConfig TrainConfig::generator_config() const {
    GeneratorConfig gc;
    gc.depth = gen_depth;
    gc.base_channels = gen_base_channels;
    return gc;
}

CriticConfig TrainConfig::critic_config() const {
    CriticConfig cc;
    cc.stage_channels.clear();
    std::stringstream ss(critic_stages);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        size_t pos = 0;
        int64_t v = 0;
        try {
            v = std::stoll(tok, &pos);
        } catch (const std::exception&) {
            throw parse_error("critic_stages: bad entry '" + tok + "'");
        }
        if (pos != tok.size() || v <= 0)
            throw parse_error("critic_stages: bad entry '" + tok + "'");
        cc.stage_channels.push_back(v);
    }
    if (cc.stage_channels.empty())
        throw parse_error("critic_stages: no stages given");
    return cc;
}

double TrainConfig::lr_for_epoch(int epoch) const {
    return lr_initial * std::pow(0.5, epoch / lr_halving_period);
}

void TrainConfig::validate() const {
    if (epochs < 1) throw config_error("epochs must be >= 1");
    if (!(lr_initial > 0)) throw config_error("lr_initial must be positive");
    if (lr_halving_period < 1) throw config_error("lr_halving_period must be >= 1");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (!(lambda > 0)) throw config_error("lambda must be positive");
    if (alpha < 0) throw config_error("alpha must be >= 0");
    if (patch_size < 1 || patch_stride < 1)
        throw config_error("patch_size and patch_stride must be >= 1");
    if (!enable_condlin && !enable_sdl && !enable_sal && !enable_gan)
        throw config_error("all model components disabled; nothing to train");
    if (embed_dim < 1 || hidden_width < 1 || encoder_blocks < 0 || flow_repeats < 1)
        throw config_error("flow architecture fields must be positive");
    if (enable_gan) {
        if (gen_depth < 2)
            throw config_error("gen_depth must be >= 2 for a meaningful receptive field");
        if (gen_base_channels < 1) throw config_error("gen_base_channels must be >= 1");
        CriticConfig cc = critic_config(); // throws on malformed stage list
        int64_t down = int64_t{1} << cc.stage_channels.size();
        if (patch_size % down != 0)
            throw config_error("patch_size must be divisible by 2^critic_stages (" +
                                       std::to_string(down) + ")");
    }
    if (steps_per_epoch < 0 || val_max_batches < 0)
        throw config_error("steps_per_epoch and val_max_batches must be >= 0");
    if (denoiser_depth < 2) throw config_error("denoiser_depth must be >= 2");
    if (denoiser_channels < 1) throw config_error("denoiser_channels must be >= 1");
    if (strategy != TrainStrategy::Simultaneous && !enable_gan)
        throw config_error(std::string(train_strategy_name(strategy)) +
                                   " strategy requires enable_gan");
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw parse_error(key + ": expected true or false, got '" + v + "'");
}

int parse_int(const std::string& v, const std::string& key) {
    size_t pos = 0;
    long out = 0;
    try {
        out = std::stol(v, &pos);
    } catch (const std::exception&) {
        throw parse_error(key + ": expected an integer, got '" + v + "'");
    }
    if (pos != v.size()) throw parse_error(key + ": expected an integer, got '" + v + "'");
    return static_cast<int>(out);
}

int64_t parse_i64(const std::string& v, const std::string& key) {
    size_t pos = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &pos);
    } catch (const std::exception&) {
        throw parse_error(key + ": expected an integer, got '" + v + "'");
    }
    if (pos != v.size()) throw parse_error(key + ": expected an integer, got '" + v + "'");
    return out;
}

uint64_t parse_u64(const std::string& v, const std::string& key) {
    size_t pos = 0;
    unsigned long long out = 0;
    try {
        out = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw parse_error(key + ": expected an unsigned integer, got '" + v + "'");
    }
    if (pos != v.size())
        throw parse_error(key + ": expected an unsigned integer, got '" + v + "'");
    return out;
}

double parse_double(const std::string& v, const std::string& key) {
    size_t pos = 0;
    double out = 0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw parse_error(key + ": expected a number, got '" + v + "'");
    }
    if (pos != v.size()) throw parse_error(key + ": expected a number, got '" + v + "'");
    return out;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

void set_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "strategy") cfg.strategy = train_strategy_from_name(value);
    else if (key == "epochs") cfg.epochs = parse_int(value, key);
    else if (key == "lr_initial") cfg.lr_initial = parse_double(value, key);
    else if (key == "lr_halving_period") cfg.lr_halving_period = parse_int(value, key);
    else if (key == "batch_size") cfg.batch_size = parse_int(value, key);
    else if (key == "lambda") cfg.lambda = parse_double(value, key);
    else if (key == "alpha") cfg.alpha = parse_double(value, key);
    else if (key == "enable_condlin") cfg.enable_condlin = parse_bool(value, key);
    else if (key == "enable_sdl") cfg.enable_sdl = parse_bool(value, key);
    else if (key == "enable_sal") cfg.enable_sal = parse_bool(value, key);
    else if (key == "enable_gan") cfg.enable_gan = parse_bool(value, key);
    else if (key == "camera_filter") cfg.camera_filter = value;
    else if (key == "seed") cfg.seed = parse_u64(value, key);
    else if (key == "patch_size") cfg.patch_size = parse_i64(value, key);
    else if (key == "patch_stride") cfg.patch_stride = parse_i64(value, key);
    else if (key == "augment") cfg.augment = parse_bool(value, key);
    else if (key == "steps_per_epoch") cfg.steps_per_epoch = parse_int(value, key);
    else if (key == "val_max_batches") cfg.val_max_batches = parse_int(value, key);
    else if (key == "embed_dim") cfg.embed_dim = parse_i64(value, key);
    else if (key == "hidden_width") cfg.hidden_width = parse_i64(value, key);
    else if (key == "encoder_blocks") cfg.encoder_blocks = parse_int(value, key);
    else if (key == "flow_repeats") cfg.flow_repeats = parse_int(value, key);
    else if (key == "gen_depth") cfg.gen_depth = parse_int(value, key);
    else if (key == "gen_base_channels") cfg.gen_base_channels = parse_i64(value, key);
    else if (key == "critic_stages") cfg.critic_stages = value;
    else if (key == "denoiser_depth") cfg.denoiser_depth = parse_int(value, key);
    else if (key == "denoiser_channels") cfg.denoiser_channels = parse_i64(value, key);
    else if (key == "denoiser_residual") cfg.denoiser_residual = parse_bool(value, key);
    else throw parse_error("unknown config key '" + key + "'");
}

} // namespace

TrainConfig parse_train_config_text(const std::string& text) {
    TrainConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw parse_error("config line " + std::to_string(lineno) +
                                      ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw parse_error("config line " + std::to_string(lineno) + ": empty key");
        set_key(cfg, key, value);
    }
    return cfg;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw not_found("cannot open config: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_train_config_text(buf.str());
}

void apply_config_override(TrainConfig& cfg, const std::string& kv) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos)
        throw parse_error("override '" + kv + "': expected key=value");
    std::string key = trim(kv.substr(0, eq));
    std::string value = trim(kv.substr(eq + 1));
    set_key(cfg, key, value);
}

std::string dump_train_config(const TrainConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    out << "strategy = " << train_strategy_name(cfg.strategy) << "\n"
        << "epochs = " << cfg.epochs << "\n"
        << "lr_initial = " << cfg.lr_initial << "\n"
        << "lr_halving_period = " << cfg.lr_halving_period << "\n"
        << "batch_size = " << cfg.batch_size << "\n"
        << "lambda = " << cfg.lambda << "\n"
        << "alpha = " << cfg.alpha << "\n"
        << "enable_condlin = " << (cfg.enable_condlin ? "true" : "false") << "\n"
        << "enable_sdl = " << (cfg.enable_sdl ? "true" : "false") << "\n"
        << "enable_sal = " << (cfg.enable_sal ? "true" : "false") << "\n"
        << "enable_gan = " << (cfg.enable_gan ? "true" : "false") << "\n"
        << "camera_filter = " << cfg.camera_filter << "\n"
        << "seed = " << cfg.seed << "\n"
        << "patch_size = " << cfg.patch_size << "\n"
        << "patch_stride = " << cfg.patch_stride << "\n"
        << "augment = " << (cfg.augment ? "true" : "false") << "\n"
        << "steps_per_epoch = " << cfg.steps_per_epoch << "\n"
        << "val_max_batches = " << cfg.val_max_batches << "\n"
        << "embed_dim = " << cfg.embed_dim << "\n"
        << "hidden_width = " << cfg.hidden_width << "\n"
        << "encoder_blocks = " << cfg.encoder_blocks << "\n"
        << "flow_repeats = " << cfg.flow_repeats << "\n"
        << "gen_depth = " << cfg.gen_depth << "\n"
        << "gen_base_channels = " << cfg.gen_base_channels << "\n"
        << "critic_stages = " << cfg.critic_stages << "\n"
        << "denoiser_depth = " << cfg.denoiser_depth << "\n"
        << "denoiser_channels = " << cfg.denoiser_channels << "\n"
        << "denoiser_residual = " << (cfg.denoiser_residual ? "true" : "false") << "\n";
    return out.str();
}

} // namespace nmfg
