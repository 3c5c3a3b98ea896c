#include "data/oracle.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/error.hpp"
#include "core/ops.hpp"
#include "data/image.hpp"

namespace fs = std::filesystem;

namespace nmfg {

void SynthCameraParams::validate() const {
    for (double v : beta_s_sq)
        if (!(v >= 0.0)) throw validation_error("beta_s_sq must be nonnegative");
    for (double v : beta_c_sq)
        if (!(v >= 0.0)) throw validation_error("beta_c_sq must be nonnegative");
    if (kernel_h <= 0 || kernel_w <= 0 ||
        int64_t(kernel.size()) != kernel_h * kernel_w)
        throw validation_error("kernel dimensions do not match weight count");
    double sum = 0.0;
    for (double v : kernel) sum += v;
    if (std::abs(sum - 1.0) > 1e-9) throw validation_error("kernel weights must sum to 1");
    if (gain_per_iso.empty()) throw validation_error("gain_per_iso must not be empty");
    for (const auto& [iso, g] : gain_per_iso)
        if (!(g > 0.0)) throw validation_error("ISO gains must be positive");
}

bool SynthCameraParams::identity_kernel() const {
    return kernel_h == 1 && kernel_w == 1;
}

SynthCameraParams SynthCameraParams::hetero_only(double bs_sq, double bc_sq,
                                                 std::map<int, double> gains) {
    SynthCameraParams p;
    p.beta_s_sq = {bs_sq, bs_sq, bs_sq};
    p.beta_c_sq = {bc_sq, bc_sq, bc_sq};
    p.gain_per_iso = std::move(gains);
    return p;
}

SynthCameraParams SynthCameraParams::horizontal_pair(double bs_sq, double bc_sq,
                                                     std::map<int, double> gains) {
    SynthCameraParams p = hetero_only(bs_sq, bc_sq, std::move(gains));
    p.kernel_h = 1;
    p.kernel_w = 2;
    p.kernel = {0.5, 0.5};
    return p;
}

namespace {

int64_t reflect(int64_t j, int64_t n) {
    if (j < 0) return -j;
    if (j >= n) return 2 * (n - 1) - j;
    return j;
}

// Correlation-style kernel application with reflect padding; anchor at the
// top-left-of-center element.
void conv_reflect(const double* src, double* dst, int64_t h, int64_t w, const double* k,
                  int64_t kh, int64_t kw) {
    int64_t ah = (kh - 1) / 2, aw = (kw - 1) / 2;
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int64_t i = 0; i < kh; ++i) {
                int64_t sy = reflect(y + i - ah, h);
                for (int64_t j = 0; j < kw; ++j) {
                    int64_t sx = reflect(x + j - aw, w);
                    acc += k[i * kw + j] * src[sy * w + sx];
                }
            }
            dst[y * w + x] = acc;
        }
}

} // namespace

Tensor oracle_noise(const SynthCameraParams& params, const Tensor& clean, int iso, Rng& rng) {
    params.validate();
    if (clean.rank() != 3 || clean.dim(0) != 3)
        throw validation_error("oracle_noise expects a [3,H,W] clean tensor");
    auto git = params.gain_per_iso.find(iso);
    if (git == params.gain_per_iso.end())
        throw unknown_condition("no oracle gain for ISO " + std::to_string(iso));
    double gain = git->second;

    int64_t h = clean.dim(1), w = clean.dim(2), hw = h * w;
    const double* pc = clean.data();
    for (int64_t i = 0; i < 3 * hw; ++i)
        if (pc[i] < 0.0 || pc[i] > 255.0)
            throw validation_error("clean image values must lie in [0,255]");

    std::vector<double> noise(size_t(3 * hw));
    std::vector<double> var_field(static_cast<size_t>(hw));
    std::vector<double> scratch(static_cast<size_t>(hw));

    std::vector<double> ksq(params.kernel.size());
    for (size_t i = 0; i < ksq.size(); ++i) ksq[i] = params.kernel[i] * params.kernel[i];

    for (int64_t c = 0; c < 3; ++c) {
        const double* plane = pc + c * hw;
        double* nplane = noise.data() + c * hw;
        double var_sum = 0.0;
        for (int64_t i = 0; i < hw; ++i) {
            double v = gain * (params.beta_s_sq[size_t(c)] * plane[i] +
                               params.beta_c_sq[size_t(c)]);
            var_field[size_t(i)] = v;
            var_sum += v;
            nplane[i] = rng.normal(0.0, std::sqrt(v));
        }
        if (params.identity_kernel()) continue;

        conv_reflect(nplane, scratch.data(), h, w, params.kernel.data(), params.kernel_h,
                     params.kernel_w);
        std::vector<double> conv_var(static_cast<size_t>(hw));
        conv_reflect(var_field.data(), conv_var.data(), h, w, ksq.data(), params.kernel_h,
                     params.kernel_w);
        double conv_var_sum = 0.0;
        for (double v : conv_var) conv_var_sum += v;
        double scale = conv_var_sum > 0.0 ? std::sqrt(var_sum / conv_var_sum) : 1.0;
        for (int64_t i = 0; i < hw; ++i) nplane[i] = scale * scratch[size_t(i)];
    }
    return Tensor::from_data({3, h, w}, std::move(noise));
}

Manifest generate_oracle_dataset(const SynthCameraParams& params,
                                 const std::vector<Tensor>& clean_images,
                                 const std::vector<CameraCondition>& conditions,
                                 uint64_t seed, const std::string& out_dir) {
    params.validate();
    if (clean_images.size() != conditions.size())
        throw validation_error("clean image and condition counts differ");
    if (clean_images.empty()) throw validation_error("no clean images supplied");
    fs::create_directories(out_dir);

    Manifest m;
    m.base_dir = out_dir;
    char name[64];
    for (size_t i = 0; i < clean_images.size(); ++i) {
        Rng rng(derive_seed(seed, uint64_t(StreamRole::Oracle), uint64_t(i)));
        Tensor noise = oracle_noise(params, clean_images[i], conditions[i].iso, rng);
        Tensor noisy = add(clean_images[i], noise);

        std::snprintf(name, sizeof(name), "clean_%04zu.png", i);
        std::string clean_name = name;
        std::snprintf(name, sizeof(name), "noisy_%04zu.png", i);
        std::string noisy_name = name;
        std::snprintf(name, sizeof(name), "scene_%04zu", i);

        save_png_rgb8((fs::path(out_dir) / clean_name).string(),
                      tensor_to_image(clean_images[i]));
        save_png_rgb8((fs::path(out_dir) / noisy_name).string(), tensor_to_image(noisy));
        m.entries.push_back({clean_name, noisy_name, conditions[i], name});
    }
    m.registry = build_registry(m.entries);
    save_manifest(m, (fs::path(out_dir) / "manifest.tsv").string());

    std::ofstream meta((fs::path(out_dir) / "oracle.meta").string());
    meta.precision(17);
    meta << "beta_s_sq\t" << params.beta_s_sq[0] << '\t' << params.beta_s_sq[1] << '\t'
         << params.beta_s_sq[2] << '\n';
    meta << "beta_c_sq\t" << params.beta_c_sq[0] << '\t' << params.beta_c_sq[1] << '\t'
         << params.beta_c_sq[2] << '\n';
    meta << "kernel_size\t" << params.kernel_h << '\t' << params.kernel_w << '\n';
    meta << "kernel";
    for (double v : params.kernel) meta << '\t' << v;
    meta << '\n';
    for (const auto& [iso, g] : params.gain_per_iso)
        meta << "gain\t" << iso << '\t' << g << '\n';
    meta << "seed\t" << seed << '\n';
    if (!meta) throw validation_error("failed writing oracle.meta");
    return m;
}

Tensor make_blocky_clean(Rng& rng, int64_t h, int64_t w, int64_t block,
                         const std::vector<double>& levels) {
    if (block <= 0 || levels.empty())
        throw validation_error("make_blocky_clean: bad block size or empty level set");
    int64_t by = (h + block - 1) / block, bx = (w + block - 1) / block;
    std::vector<double> v(size_t(3 * h * w));
    for (int64_t c = 0; c < 3; ++c) {
        std::vector<double> cell(size_t(by * bx));
        for (auto& x : cell) x = levels[size_t(rng.uniform_int(int64_t(levels.size())))];
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                v[size_t((c * h + y) * w + x)] = cell[size_t((y / block) * bx + x / block)];
    }
    return Tensor::from_data({3, h, w}, std::move(v));
}

Tensor make_uniform_clean(Rng& rng, int64_t h, int64_t w, double lo, double hi) {
    std::vector<double> v(size_t(3 * h * w));
    int64_t ilo = int64_t(std::ceil(lo)), ihi = int64_t(std::floor(hi));
    if (ihi < ilo) throw validation_error("make_uniform_clean: empty intensity range");
    for (auto& x : v) x = double(ilo + rng.uniform_int(ihi - ilo + 1));
    return Tensor::from_data({3, h, w}, std::move(v));
}

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_num(const std::string& v, const std::string& key) {
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

int64_t parse_whole(const std::string& v, const std::string& key) {
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

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

std::array<double, 3> parse_triple(const std::string& v, const std::string& key) {
    auto parts = split_list(v);
    if (parts.size() == 1) {
        double x = parse_num(parts[0], key);
        return {x, x, x};
    }
    if (parts.size() == 3)
        return {parse_num(parts[0], key), parse_num(parts[1], key), parse_num(parts[2], key)};
    throw parse_error(key + ": expected one value or a comma-separated triple");
}

void set_oracle_key(OracleGenConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "beta_s_sq") cfg.params.beta_s_sq = parse_triple(value, key);
    else if (key == "beta_c_sq") cfg.params.beta_c_sq = parse_triple(value, key);
    else if (key == "kernel_h") cfg.params.kernel_h = parse_whole(value, key);
    else if (key == "kernel_w") cfg.params.kernel_w = parse_whole(value, key);
    else if (key == "kernel") {
        cfg.params.kernel.clear();
        for (const auto& tok : split_list(value)) cfg.params.kernel.push_back(parse_num(tok, key));
        if (cfg.params.kernel.empty()) throw parse_error("kernel: empty weight list");
    } else if (key == "gains") {
        cfg.params.gain_per_iso.clear();
        for (const auto& tok : split_list(value)) {
            size_t colon = tok.find(':');
            if (colon == std::string::npos)
                throw parse_error("gains: expected iso:gain pairs, got '" + tok + "'");
            int iso = int(parse_whole(trim(tok.substr(0, colon)), key));
            cfg.params.gain_per_iso[iso] = parse_num(trim(tok.substr(colon + 1)), key);
        }
        if (cfg.params.gain_per_iso.empty()) throw parse_error("gains: empty list");
    } else if (key == "cameras") {
        cfg.cameras = split_list(value);
        if (cfg.cameras.empty()) throw parse_error("cameras: empty list");
    } else if (key == "images_per_condition") {
        cfg.images_per_condition = int(parse_whole(value, key));
    } else if (key == "height") cfg.height = parse_whole(value, key);
    else if (key == "width") cfg.width = parse_whole(value, key);
    else if (key == "content") {
        if (value != "blocky" && value != "uniform")
            throw parse_error("content: expected blocky or uniform, got '" + value + "'");
        cfg.content = value;
    } else if (key == "block") cfg.block = parse_whole(value, key);
    else if (key == "levels") {
        cfg.levels.clear();
        for (const auto& tok : split_list(value)) cfg.levels.push_back(parse_num(tok, key));
        if (cfg.levels.empty()) throw parse_error("levels: empty list");
    } else {
        throw parse_error("unknown oracle config key '" + key + "'");
    }
}

} // namespace

OracleGenConfig parse_oracle_config_text(const std::string& text) {
    OracleGenConfig cfg;
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
            throw parse_error("oracle config line " + std::to_string(lineno) +
                              ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw parse_error("oracle config line " + std::to_string(lineno) + ": empty key");
        set_oracle_key(cfg, key, value);
    }
    return cfg;
}

OracleGenConfig load_oracle_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw not_found("cannot open oracle config: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_oracle_config_text(buf.str());
}

void apply_oracle_override(OracleGenConfig& cfg, const std::string& kv) {
    size_t eq = kv.find('=');
    if (eq == std::string::npos)
        throw parse_error("override '" + kv + "': expected key=value");
    std::string key = trim(kv.substr(0, eq));
    std::string value = trim(kv.substr(eq + 1));
    set_oracle_key(cfg, key, value);
}

std::string dump_oracle_config(const OracleGenConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    auto put_triple = [&](const char* key, const std::array<double, 3>& t) {
        out << key << " = " << t[0] << "," << t[1] << "," << t[2] << "\n";
    };
    put_triple("beta_s_sq", cfg.params.beta_s_sq);
    put_triple("beta_c_sq", cfg.params.beta_c_sq);
    out << "kernel_h = " << cfg.params.kernel_h << "\n"
        << "kernel_w = " << cfg.params.kernel_w << "\n"
        << "kernel = ";
    for (size_t i = 0; i < cfg.params.kernel.size(); ++i)
        out << (i ? "," : "") << cfg.params.kernel[i];
    out << "\ngains = ";
    size_t gi = 0;
    for (const auto& [iso, g] : cfg.params.gain_per_iso) out << (gi++ ? "," : "") << iso << ":" << g;
    out << "\ncameras = ";
    for (size_t i = 0; i < cfg.cameras.size(); ++i) out << (i ? "," : "") << cfg.cameras[i];
    out << "\nimages_per_condition = " << cfg.images_per_condition << "\n"
        << "height = " << cfg.height << "\n"
        << "width = " << cfg.width << "\n"
        << "content = " << cfg.content << "\n"
        << "block = " << cfg.block << "\n"
        << "levels = ";
    for (size_t i = 0; i < cfg.levels.size(); ++i) out << (i ? "," : "") << cfg.levels[i];
    out << "\n";
    return out.str();
}

Manifest run_oracle_generation(const OracleGenConfig& cfg, uint64_t seed,
                               const std::string& out_dir) {
    cfg.params.validate();
    if (cfg.cameras.empty()) throw validation_error("oracle config: no cameras");
    if (cfg.images_per_condition < 1)
        throw validation_error("oracle config: images_per_condition must be >= 1");
    if (cfg.height < 1 || cfg.width < 1)
        throw validation_error("oracle config: height and width must be >= 1");
    if (cfg.content != "blocky" && cfg.content != "uniform")
        throw validation_error("oracle config: content must be blocky or uniform");

    Rng content(derive_seed(seed, uint64_t(StreamRole::OracleContent), 0));
    std::vector<Tensor> cleans;
    std::vector<CameraCondition> conds;
    for (const std::string& cam : cfg.cameras)
        for (const auto& [iso, gain] : cfg.params.gain_per_iso)
            for (int i = 0; i < cfg.images_per_condition; ++i) {
                cleans.push_back(cfg.content == "blocky"
                                     ? make_blocky_clean(content, cfg.height, cfg.width,
                                                         cfg.block, cfg.levels)
                                     : make_uniform_clean(content, cfg.height, cfg.width));
                conds.push_back({cam, iso});
            }
    return generate_oracle_dataset(cfg.params, cleans, conds, seed, out_dir);
}

} // namespace nmfg
