// Command-line front end. Everything goes through the shared-library C
// interface; this file only parses arguments and renders error messages.
#include "CLI11.hpp"
#include "nmflowgan.h"

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace {

int status_to_exit(nmfg_status st) {
    if (st == NMFG_OK) return 0;
    return st == NMFG_ERR_DIVERGED ? 2 : 1;
}

int finish(const char* command, nmfg_status st) {
    if (st != NMFG_OK) std::fprintf(stderr, "%s: %s\n", command, nmfg_last_error());
    return status_to_exit(st);
}

std::vector<const char*> as_ptrs(const std::vector<std::string>& v) {
    std::vector<const char*> out;
    out.reserve(v.size());
    for (const auto& s : v) out.push_back(s.c_str());
    return out;
}

bool parse_ll(const std::string& s, long long& out) {
    try {
        size_t used = 0;
        out = std::stoll(s, &used);
        return used == s.size();
    } catch (...) {
        return false;
    }
}

bool split_kv(const std::string& kv, std::string& key, std::string& value) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) return false;
    key = kv.substr(0, eq);
    value = kv.substr(eq + 1);
    return true;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Camera noise modeling toolkit: learns signal-dependent, spatially "
                 "correlated sensor noise and synthesizes it for denoiser training."};
    app.require_subcommand(1);
    app.set_version_flag("--version", [] { return std::string(nmfg_version()); });

    // analyze
    auto* analyze = app.add_subcommand(
        "analyze", "Estimate noise statistics from a manifest of clean/noisy pairs");
    std::string an_manifest, an_out;
    std::vector<std::string> an_sets;
    analyze->add_option("manifest", an_manifest, "Manifest of clean/noisy image pairs")
        ->required();
    analyze->add_option("--out", an_out, "Output directory")->required();
    analyze->add_option("--set", an_sets, "Override (supported: max_distance=N)");

    // oracle-gen
    auto* oracle = app.add_subcommand(
        "oracle-gen", "Generate a synthetic dataset from a known virtual camera");
    std::string og_config, og_out;
    std::vector<std::string> og_sets;
    uint64_t og_seed = 0;
    oracle->add_option("--config", og_config, "Virtual camera config file");
    oracle->add_option("--set", og_sets, "Config override key=value");
    oracle->add_option("--seed", og_seed, "Generation seed");
    oracle->add_option("--out", og_out, "Output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "Train the noise model on a manifest");
    std::string tr_manifest, tr_config, tr_out, tr_resume;
    std::vector<std::string> tr_sets;
    uint64_t tr_seed = 0;
    train->add_option("manifest", tr_manifest, "Training manifest")->required();
    train->add_option("--config", tr_config, "Training config file");
    train->add_option("--set", tr_sets, "Config override key=value");
    auto* tr_seed_opt = train->add_option("--seed", tr_seed, "Training seed");
    train->add_option("--checkpoint", tr_resume, "Checkpoint to resume from");
    train->add_option("--out", tr_out, "Output directory")->required();

    // synthesize
    auto* synth = app.add_subcommand(
        "synthesize", "Sample noise for every image of a clean manifest, using each "
                      "row's own camera condition");
    std::string sy_manifest, sy_ckpt, sy_out;
    uint64_t sy_seed = 0;
    synth->add_option("manifest", sy_manifest, "Clean image manifest")->required();
    synth->add_option("--checkpoint", sy_ckpt, "Trained noise model checkpoint")
        ->required();
    synth->add_option("--seed", sy_seed, "Synthesis seed");
    synth->add_option("--out", sy_out, "Output directory")->required();

    // make-dataset
    auto* mkds = app.add_subcommand(
        "make-dataset", "Build a paired denoiser-training dataset from clean images");
    std::string md_manifest, md_ckpt, md_out;
    std::vector<std::string> md_sets;
    uint64_t md_seed = 0;
    mkds->add_option("manifest", md_manifest, "Clean image manifest")->required();
    mkds->add_option("--checkpoint", md_ckpt, "Trained noise model checkpoint")
        ->required();
    mkds->add_option("--set", md_sets,
                     "Override (condition_policy=uniform|fixed|manifest, camera=NAME, "
                     "iso=N)");
    mkds->add_option("--seed", md_seed, "Synthesis seed");
    mkds->add_option("--out", md_out, "Output directory")->required();

    // train-denoiser
    auto* trdn = app.add_subcommand("train-denoiser",
                                    "Train a denoiser on a paired manifest");
    std::string dn_manifest, dn_config, dn_out;
    std::vector<std::string> dn_sets;
    uint64_t dn_seed = 0;
    trdn->add_option("manifest", dn_manifest, "Paired clean/noisy manifest")->required();
    trdn->add_option("--config", dn_config, "Training config file");
    trdn->add_option("--set", dn_sets, "Config override key=value");
    auto* dn_seed_opt = trdn->add_option("--seed", dn_seed, "Training seed");
    trdn->add_option("--out", dn_out, "Output directory")->required();

    // evaluate
    auto* eval = app.add_subcommand(
        "evaluate", "Compare real vs synthetic noise and optionally score a denoiser");
    std::string ev_real, ev_synth, ev_test, ev_ckpt, ev_out;
    eval->add_option("real", ev_real, "Manifest of real noisy images")->required();
    eval->add_option("synth", ev_synth, "Manifest of synthetic noisy images")->required();
    auto* ev_test_opt =
        eval->add_option("test", ev_test, "Denoiser test manifest (defaults to real)");
    auto* ev_ckpt_opt = eval->add_option("--checkpoint", ev_ckpt, "Denoiser checkpoint");
    eval->add_option("--out", ev_out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (analyze->parsed()) {
        long long max_distance = 16;
        for (const auto& kv : an_sets) {
            std::string key, value;
            if (!split_kv(kv, key, value) || key != "max_distance" ||
                !parse_ll(value, max_distance)) {
                std::fprintf(stderr, "analyze: bad --set '%s' (supported: max_distance=N)\n",
                             kv.c_str());
                return 1;
            }
        }
        return finish("analyze",
                      nmfg_analyze(an_manifest.c_str(), int(max_distance), an_out.c_str()));
    }

    if (oracle->parsed()) {
        auto sets = as_ptrs(og_sets);
        return finish("oracle-gen",
                      nmfg_oracle_generate(og_config.empty() ? nullptr : og_config.c_str(),
                                           sets.data(), sets.size(), og_seed,
                                           og_out.c_str()));
    }

    if (train->parsed()) {
        std::vector<std::string> sets = tr_sets;
        if (tr_seed_opt->count()) sets.push_back("seed=" + std::to_string(tr_seed));
        auto ptrs = as_ptrs(sets);
        return finish("train",
                      nmfg_train(tr_manifest.c_str(),
                                 tr_config.empty() ? nullptr : tr_config.c_str(),
                                 ptrs.data(), ptrs.size(),
                                 tr_resume.empty() ? nullptr : tr_resume.c_str(),
                                 tr_out.c_str()));
    }

    if (synth->parsed()) {
        return finish("synthesize", nmfg_synthesize(sy_ckpt.c_str(), sy_manifest.c_str(),
                                                    sy_seed, sy_out.c_str()));
    }

    if (mkds->parsed()) {
        std::string policy = "uniform", camera;
        bool have_camera = false;
        long long iso = 0;
        for (const auto& kv : md_sets) {
            std::string key, value;
            if (!split_kv(kv, key, value)) {
                std::fprintf(stderr, "make-dataset: bad --set '%s'\n", kv.c_str());
                return 1;
            }
            if (key == "condition_policy") {
                policy = value;
            } else if (key == "camera") {
                camera = value;
                have_camera = true;
            } else if (key == "iso") {
                if (!parse_ll(value, iso)) {
                    std::fprintf(stderr, "make-dataset: iso must be an integer, got '%s'\n",
                                 value.c_str());
                    return 1;
                }
            } else {
                std::fprintf(stderr,
                             "make-dataset: unknown key '%s' (supported: condition_policy, "
                             "camera, iso)\n",
                             key.c_str());
                return 1;
            }
        }
        return finish("make-dataset",
                      nmfg_make_dataset(md_ckpt.c_str(), md_manifest.c_str(),
                                        policy.c_str(),
                                        have_camera ? camera.c_str() : nullptr, int(iso),
                                        md_seed, md_out.c_str()));
    }

    if (trdn->parsed()) {
        std::vector<std::string> sets = dn_sets;
        if (dn_seed_opt->count()) sets.push_back("seed=" + std::to_string(dn_seed));
        auto ptrs = as_ptrs(sets);
        return finish("train-denoiser",
                      nmfg_train_denoiser(dn_manifest.c_str(),
                                          dn_config.empty() ? nullptr : dn_config.c_str(),
                                          ptrs.data(), ptrs.size(), dn_out.c_str()));
    }

    if (eval->parsed()) {
        double mean_psnr = 0.0, mean_ssim = 0.0;
        bool with_denoiser = ev_ckpt_opt->count() > 0;
        nmfg_status st = nmfg_evaluate(
            ev_real.c_str(), ev_synth.c_str(), with_denoiser ? ev_ckpt.c_str() : nullptr,
            ev_test_opt->count() ? ev_test.c_str() : nullptr, ev_out.c_str(), &mean_psnr,
            &mean_ssim);
        if (st == NMFG_OK && with_denoiser)
            std::printf("mean_psnr=%.6f\nmean_ssim=%.6f\n", mean_psnr, mean_ssim);
        return finish("evaluate", st);
    }

    return 1;
}
