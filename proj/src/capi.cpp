#include "nmflowgan.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "analysis/statistics.hpp"
#include "core/error.hpp"
#include "core/ops.hpp"
#include "data/manifest.hpp"
#include "data/oracle.hpp"
#include "eval/denoiser.hpp"
#include "eval/metrics.hpp"
#include "gan/gan.hpp"
#include "train/checkpoint.hpp"
#include "train/config.hpp"
#include "train/train.hpp"

using namespace nmfg;

struct nmfg_model {
    ModelBundle bundle;
};

struct nmfg_denoiser {
    Denoiser d;
};

namespace {

constexpr const char* kVersionString = "0.1.0";

thread_local std::string t_last_error;

nmfg_status map_code(ErrorCode c) {
    switch (c) {
        case ErrorCode::NotFound: return NMFG_ERR_NOT_FOUND;
        case ErrorCode::ParseError: return NMFG_ERR_PARSE;
        case ErrorCode::ValidationError: return NMFG_ERR_VALIDATION;
        case ErrorCode::FormatError: return NMFG_ERR_FORMAT;
        case ErrorCode::InsufficientData: return NMFG_ERR_INSUFFICIENT_DATA;
        case ErrorCode::FitError: return NMFG_ERR_FIT;
        case ErrorCode::UnknownCondition: return NMFG_ERR_UNKNOWN_CONDITION;
        case ErrorCode::ConfigurationError: return NMFG_ERR_CONFIG;
        case ErrorCode::NumericalError: return NMFG_ERR_NUMERICAL;
        case ErrorCode::Diverged: return NMFG_ERR_DIVERGED;
    }
    return NMFG_ERR_INTERNAL;
}

template <typename Fn>
nmfg_status guarded(Fn&& fn) {
    try {
        fn();
        t_last_error.clear();
        return NMFG_OK;
    } catch (const Error& e) {
        t_last_error = e.what();
        return map_code(e.code());
    } catch (const std::exception& e) {
        t_last_error = e.what();
        return NMFG_ERR_INTERNAL;
    }
}

const char* require(const char* p, const char* what) {
    if (!p) throw validation_error(std::string(what) + " must not be NULL");
    return p;
}

std::vector<std::string> override_list(const char* const* overrides, size_t n) {
    if (n > 0 && !overrides)
        throw validation_error("overrides must not be NULL when n_overrides > 0");
    std::vector<std::string> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        if (!overrides[i]) throw validation_error("override entries must not be NULL");
        out.emplace_back(overrides[i]);
    }
    return out;
}

TrainConfig resolve_train_config(const char* config_path, const char* const* overrides,
                                 size_t n) {
    TrainConfig cfg;
    if (config_path) cfg = load_train_config(config_path);
    for (const std::string& kv : override_list(overrides, n)) apply_config_override(cfg, kv);
    return cfg;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw not_found("cannot write " + path);
    f.precision(10);
    return f;
}

// run.meta: flat command metadata, then the resolved configuration under a
// [config] marker. No timestamps, so a rerun reproduces it byte-identically.
void write_run_meta(const std::string& out_dir, const std::string& command,
                    const std::vector<std::pair<std::string, std::string>>& fields,
                    const std::string& config_dump) {
    std::filesystem::create_directories(out_dir);
    std::string path = out_dir + "/run.meta";
    std::ofstream out(path);
    if (!out) throw not_found("cannot write " + path);
    out << "command = " << command << "\n"
        << "tool_version = " << kVersionString << "\n"
        << "checkpoint_format = " << checkpoint_format_version() << "\n"
        << "denoiser_format = " << denoiser_format_version() << "\n";
    for (const auto& [k, v] : fields) out << k << " = " << v << "\n";
    if (!config_dump.empty()) out << "[config]\n" << config_dump;
    out.flush();
    if (!out) throw not_found("write failed for " + path);
}

Tensor image_from(const double* data, int64_t h, int64_t w, const char* what) {
    if (!data) throw validation_error(std::string(what) + " must not be NULL");
    if (h < 1 || w < 1) throw validation_error("image dimensions must be positive");
    return Tensor::from_data({3, h, w}, std::vector<double>(data, data + 3 * h * w));
}

void write_field(double* dst, const Tensor& t) {
    std::memcpy(dst, t.data(), size_t(t.numel()) * sizeof(double));
}

void copy_string(const std::string& s, char* buf, size_t cap) {
    if (!buf) throw validation_error("output buffer must not be NULL");
    if (cap < s.size() + 1)
        throw validation_error("buffer too small: need " + std::to_string(s.size() + 1) +
                               " bytes");
    std::memcpy(buf, s.c_str(), s.size() + 1);
}

} // namespace

extern "C" {

const char* nmfg_version(void) { return kVersionString; }

const char* nmfg_last_error(void) { return t_last_error.c_str(); }

nmfg_status nmfg_analyze(const char* manifest_path, int max_distance, const char* out_dir) {
    return guarded([&] {
        require(manifest_path, "manifest_path");
        require(out_dir, "out_dir");
        if (max_distance < 1) throw validation_error("max_distance must be >= 1");
        Manifest m = load_manifest(manifest_path);
        std::vector<ImagePair> pairs;
        std::vector<Tensor> fields;
        for (const auto& e : m.entries) {
            if (e.noisy_path.empty()) continue;
            pairs.push_back(load_pair(m, e));
            fields.push_back(sub(*pairs.back().noisy, pairs.back().clean));
        }
        if (pairs.empty())
            throw validation_error("manifest has no clean/noisy pairs to analyze");
        HeteroParams hp = estimate_hetero(pairs);
        StdIntensityCurve curve = std_vs_intensity(pairs, 32);
        CorrelationProfile prof = spatial_correlation(fields, max_distance);

        std::string outp(out_dir);
        std::filesystem::create_directories(outp);
        {
            auto f = open_out(outp + "/hetero.csv");
            f << "channel,beta_s_sq,beta_c_sq\n";
            for (int c = 0; c < 3; ++c)
                f << c << ',' << hp.beta_s_sq[size_t(c)] << ',' << hp.beta_c_sq[size_t(c)]
                  << '\n';
        }
        {
            auto f = open_out(outp + "/std_curve.csv");
            f << "channel,bin_center,std,count\n";
            for (int c = 0; c < 3; ++c)
                for (const auto& bin : curve.channels[size_t(c)])
                    f << c << ',' << bin.intensity_center << ',' << bin.stddev << ','
                      << bin.count << '\n';
        }
        {
            auto f = open_out(outp + "/correlation.csv");
            f << "d,r,count\n";
            for (const auto& pt : prof.points)
                f << pt.distance << ',' << pt.r << ',' << pt.count << '\n';
        }
        write_run_meta(outp, "analyze", {{"manifest", manifest_path}},
                       "max_distance = " + std::to_string(max_distance) + "\n");
    });
}

nmfg_status nmfg_oracle_generate(const char* config_path, const char* const* overrides,
                                 size_t n_overrides, uint64_t seed, const char* out_dir) {
    return guarded([&] {
        require(out_dir, "out_dir");
        OracleGenConfig cfg;
        if (config_path) cfg = load_oracle_config(config_path);
        for (const std::string& kv : override_list(overrides, n_overrides))
            apply_oracle_override(cfg, kv);
        run_oracle_generation(cfg, seed, out_dir);
        write_run_meta(out_dir, "oracle-gen", {{"seed", std::to_string(seed)}},
                       dump_oracle_config(cfg));
    });
}

nmfg_status nmfg_train(const char* manifest_path, const char* config_path,
                       const char* const* overrides, size_t n_overrides,
                       const char* resume_checkpoint, const char* out_dir) {
    return guarded([&] {
        require(manifest_path, "manifest_path");
        require(out_dir, "out_dir");
        TrainConfig cfg = resolve_train_config(config_path, overrides, n_overrides);
        cfg.validate();
        Manifest m = load_manifest(manifest_path);
        write_run_meta(out_dir, "train",
                       {{"manifest", manifest_path},
                        {"resume", resume_checkpoint ? resume_checkpoint : "-"}},
                       dump_train_config(cfg));
        if (resume_checkpoint)
            resume_training(cfg, m, out_dir, resume_checkpoint);
        else
            train(cfg, m, out_dir);
    });
}

nmfg_status nmfg_synthesize(const char* checkpoint_path, const char* clean_manifest_path,
                            uint64_t seed, const char* out_dir) {
    return guarded([&] {
        require(checkpoint_path, "checkpoint_path");
        require(clean_manifest_path, "clean_manifest_path");
        require(out_dir, "out_dir");
        ModelBundle models = load_checkpoint(checkpoint_path);
        Manifest clean = load_manifest(clean_manifest_path);
        DenoiserDatasetOptions opt;
        opt.policy = ConditionPolicy::FromManifest;
        opt.seed = seed;
        make_denoiser_dataset(models, clean, opt, out_dir);
        write_run_meta(out_dir, "synthesize",
                       {{"checkpoint", checkpoint_path},
                        {"manifest", clean_manifest_path},
                        {"seed", std::to_string(seed)}},
                       "condition_policy = manifest\n");
    });
}

nmfg_status nmfg_make_dataset(const char* checkpoint_path, const char* clean_manifest_path,
                              const char* policy, const char* fixed_camera, int fixed_iso,
                              uint64_t seed, const char* out_dir) {
    return guarded([&] {
        require(checkpoint_path, "checkpoint_path");
        require(clean_manifest_path, "clean_manifest_path");
        require(out_dir, "out_dir");
        std::string pol = require(policy, "policy");
        DenoiserDatasetOptions opt;
        opt.seed = seed;
        std::string config_lines = "condition_policy = " + pol + "\n";
        if (pol == "uniform") {
            opt.policy = ConditionPolicy::Uniform;
        } else if (pol == "manifest") {
            opt.policy = ConditionPolicy::FromManifest;
        } else if (pol == "fixed") {
            opt.policy = ConditionPolicy::Fixed;
            opt.fixed.camera = require(fixed_camera, "fixed_camera");
            opt.fixed.iso = fixed_iso;
            config_lines += "camera = " + opt.fixed.camera + "\n";
            config_lines += "iso = " + std::to_string(fixed_iso) + "\n";
        } else {
            throw validation_error("policy must be uniform, fixed or manifest, got '" + pol +
                                   "'");
        }
        ModelBundle models = load_checkpoint(checkpoint_path);
        Manifest clean = load_manifest(clean_manifest_path);
        make_denoiser_dataset(models, clean, opt, out_dir);
        write_run_meta(out_dir, "make-dataset",
                       {{"checkpoint", checkpoint_path},
                        {"manifest", clean_manifest_path},
                        {"seed", std::to_string(seed)}},
                       config_lines);
    });
}

nmfg_status nmfg_train_denoiser(const char* manifest_path, const char* config_path,
                                const char* const* overrides, size_t n_overrides,
                                const char* out_dir) {
    return guarded([&] {
        require(manifest_path, "manifest_path");
        require(out_dir, "out_dir");
        TrainConfig cfg = resolve_train_config(config_path, overrides, n_overrides);
        DenoiserSpec spec;
        spec.depth = cfg.denoiser_depth;
        spec.channels = cfg.denoiser_channels;
        spec.residual = cfg.denoiser_residual;
        Manifest m = load_manifest(manifest_path);
        write_run_meta(out_dir, "train-denoiser", {{"manifest", manifest_path}},
                       dump_train_config(cfg));
        DenoiserTrainResult res = train_denoiser(spec, m, cfg, out_dir);
        auto log = open_out(std::string(out_dir) + "/dn_val_log.tsv");
        log.precision(12);
        log << "epoch\tval_psnr\tlr\n";
        for (size_t e = 0; e < res.val_psnr_per_epoch.size(); ++e)
            log << e << '\t' << res.val_psnr_per_epoch[e] << '\t' << cfg.lr_for_epoch(int(e))
                << '\n';
    });
}

nmfg_status nmfg_evaluate(const char* real_manifest_path, const char* synth_manifest_path,
                          const char* denoiser_checkpoint_path, const char* test_manifest_path,
                          const char* out_dir, double* mean_psnr, double* mean_ssim) {
    return guarded([&] {
        require(out_dir, "out_dir");
        bool kl_half = real_manifest_path || synth_manifest_path;
        bool dn_half = denoiser_checkpoint_path != nullptr;
        if (!kl_half && !dn_half)
            throw validation_error(
                "nothing to evaluate: provide real+synth manifests and/or a denoiser "
                "checkpoint");
        if (kl_half && (!real_manifest_path || !synth_manifest_path))
            throw validation_error("KL evaluation needs both real and synth manifests");
        if (test_manifest_path && !dn_half)
            throw validation_error("test_manifest is only meaningful with a denoiser checkpoint");

        std::string outp(out_dir);
        std::vector<std::pair<std::string, std::string>> meta;
        if (kl_half) {
            Manifest real = load_manifest(real_manifest_path);
            Manifest synth = load_manifest(synth_manifest_path);
            auto rows = kl_report(real, synth);
            std::filesystem::create_directories(outp);
            write_kl_report_csv(rows, outp + "/kl_report.csv");
            meta.push_back({"real", real_manifest_path});
            meta.push_back({"synth", synth_manifest_path});
        }
        if (dn_half) {
            const char* test = test_manifest_path ? test_manifest_path : real_manifest_path;
            if (!test)
                throw validation_error(
                    "denoiser evaluation needs a test manifest (or a real manifest to reuse)");
            Denoiser den = load_denoiser(denoiser_checkpoint_path);
            Manifest tm = load_manifest(test);
            std::filesystem::create_directories(outp);
            DenoiserEvalResult res = evaluate_denoiser(den, tm, outp + "/denoise_report.csv");
            if (mean_psnr) *mean_psnr = res.mean_psnr;
            if (mean_ssim) *mean_ssim = res.mean_ssim;
            meta.push_back({"denoiser", denoiser_checkpoint_path});
            meta.push_back({"test", test});
        }
        write_run_meta(outp, "evaluate", meta, "");
    });
}

nmfg_status nmfg_model_load(const char* checkpoint_path, nmfg_model** out) {
    return guarded([&] {
        require(checkpoint_path, "checkpoint_path");
        if (!out) throw validation_error("out must not be NULL");
        ModelBundle b = load_checkpoint(checkpoint_path);
        *out = new nmfg_model{std::move(b)};
    });
}

void nmfg_model_free(nmfg_model* model) { delete model; }

nmfg_status nmfg_model_has_gan(const nmfg_model* model, int* out) {
    return guarded([&] {
        if (!model || !out) throw validation_error("model and out must not be NULL");
        *out = model->bundle.has_gan() ? 1 : 0;
    });
}

nmfg_status nmfg_model_cameras(const nmfg_model* model, char* buf, size_t cap) {
    return guarded([&] {
        if (!model) throw validation_error("model must not be NULL");
        std::string joined;
        const auto& cams = model->bundle.flow.registry().cameras;
        for (size_t i = 0; i < cams.size(); ++i) joined += (i ? "," : "") + cams[i];
        copy_string(joined, buf, cap);
    });
}

nmfg_status nmfg_model_isos(const nmfg_model* model, char* buf, size_t cap) {
    return guarded([&] {
        if (!model) throw validation_error("model must not be NULL");
        std::string joined;
        const auto& isos = model->bundle.flow.registry().isos;
        for (size_t i = 0; i < isos.size(); ++i)
            joined += (i ? "," : "") + std::to_string(isos[i]);
        copy_string(joined, buf, cap);
    });
}

nmfg_status nmfg_model_synthesize(const nmfg_model* model, const double* clean, int64_t h,
                                  int64_t w, const char* camera, int iso, uint64_t seed,
                                  double* noise_out, double* noisy_out) {
    return guarded([&] {
        if (!model) throw validation_error("model must not be NULL");
        Tensor clean_t = image_from(clean, h, w, "clean");
        CameraCondition cond{require(camera, "camera"), iso};
        NoGradGuard ng;
        Rng rng(derive_seed(seed, uint64_t(StreamRole::Synthesis), 0));
        const Generator* gen = model->bundle.gen ? &*model->bundle.gen : nullptr;
        SynthesisResult r = end_to_end_synthesize(model->bundle.flow, gen, clean_t, cond, rng);
        if (noise_out) write_field(noise_out, r.noise);
        if (noisy_out) write_field(noisy_out, r.noisy);
    });
}

nmfg_status nmfg_model_nll(const nmfg_model* model, const double* clean, const double* noise,
                           int64_t h, int64_t w, const char* camera, int iso, double* out) {
    return guarded([&] {
        if (!model || !out) throw validation_error("model and out must not be NULL");
        Tensor clean_t = reshape(image_from(clean, h, w, "clean"), {1, 3, h, w});
        Tensor noise_t = reshape(image_from(noise, h, w, "noise"), {1, 3, h, w});
        CameraCondition cond{require(camera, "camera"), iso};
        NoGradGuard ng;
        FlowContext ctx = model->bundle.flow.make_context(clean_t, {cond});
        *out = model->bundle.flow.nll(noise_t, ctx).item();
    });
}

nmfg_status nmfg_denoiser_load(const char* checkpoint_path, nmfg_denoiser** out) {
    return guarded([&] {
        require(checkpoint_path, "checkpoint_path");
        if (!out) throw validation_error("out must not be NULL");
        *out = new nmfg_denoiser{load_denoiser(checkpoint_path)};
    });
}

void nmfg_denoiser_free(nmfg_denoiser* denoiser) { delete denoiser; }

nmfg_status nmfg_denoiser_run(const nmfg_denoiser* denoiser, const double* noisy, int64_t h,
                              int64_t w, double* denoised_out) {
    return guarded([&] {
        if (!denoiser) throw validation_error("denoiser must not be NULL");
        if (!denoised_out) throw validation_error("denoised_out must not be NULL");
        Tensor img = image_from(noisy, h, w, "noisy");
        write_field(denoised_out, denoiser->d.denoise_image(img));
    });
}

} // extern "C"
