#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "core/error.hpp"
#include "core/ops.hpp"
#include "data/image.hpp"
#include "data/oracle.hpp"
#include "doctest.h"
#include "train/train.hpp"

using namespace nmfg;
namespace fs = std::filesystem;

namespace {

fs::path scratch_root() {
    fs::path p = fs::temp_directory_path() / "nmfg_train_tests";
    fs::create_directories(p);
    return p;
}

// 6 images / 6 scenes, 4 from CAM_A and 2 from CAM_B, one ISO, pixel-wise
// heteroscedastic noise. Built once and reused by every test in this binary.
const Manifest& shared_dataset() {
    static Manifest m = [] {
        fs::path dir = scratch_root() / "pairs";
        SynthCameraParams params = SynthCameraParams::hetero_only(0.5, 4.0, {{100, 1.0}});
        Rng rng(42);
        std::vector<Tensor> cleans;
        std::vector<CameraCondition> conds;
        for (int i = 0; i < 6; ++i) {
            cleans.push_back(make_uniform_clean(rng, 32, 32));
            conds.push_back({i < 4 ? "CAM_A" : "CAM_B", 100});
        }
        return generate_oracle_dataset(params, cleans, conds, 91, dir.string());
    }();
    return m;
}

TrainConfig small_cfg() {
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 4;
    cfg.patch_size = 16;
    cfg.patch_stride = 16;
    cfg.embed_dim = 8;
    cfg.hidden_width = 8;
    cfg.encoder_blocks = 1;
    cfg.flow_repeats = 1;
    cfg.gen_depth = 2;
    cfg.gen_base_channels = 4;
    cfg.critic_stages = "4,8";
    cfg.steps_per_epoch = 2;
    cfg.seed = 7;
    cfg.enable_gan = false;
    return cfg;
}

std::string fresh_dir(const std::string& name) {
    fs::path p = scratch_root() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

bool params_identical(const ParamStore& a, const ParamStore& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a.name(i) != b.name(i)) return false;
        const Tensor &ta = a.tensor(i), &tb = b.tensor(i);
        if (ta.shape() != tb.shape()) return false;
        for (int64_t j = 0; j < ta.numel(); ++j)
            if (ta.data()[j] != tb.data()[j]) return false;
    }
    return true;
}

// Rows of the step log, header skipped; nan cells parse as nan.
std::vector<std::vector<double>> read_log(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(bool(in));
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "step\tnll\twgan\tgp\tadv\tlr");
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, '\t')) row.push_back(std::stod(cell));
        REQUIRE(row.size() == 6);
        rows.push_back(row);
    }
    return rows;
}

} // namespace

TEST_CASE("learning rate halves every ten epochs exactly") {
    TrainConfig cfg;
    CHECK(cfg.lr_for_epoch(0) == 1e-4);
    CHECK(cfg.lr_for_epoch(9) == 1e-4);
    CHECK(cfg.lr_for_epoch(10) == 5e-5);
    CHECK(cfg.lr_for_epoch(19) == 5e-5);
    CHECK(cfg.lr_for_epoch(20) == 2.5e-5);
    CHECK(cfg.lr_for_epoch(30) == 1.25e-5);
    CHECK(cfg.lr_for_epoch(39) == 1.25e-5);

    cfg.lr_halving_period = 3;
    cfg.lr_initial = 0.5;
    CHECK(cfg.lr_for_epoch(2) == 0.5);
    CHECK(cfg.lr_for_epoch(3) == 0.25);
}

TEST_CASE("config text parses, dumps and rejects bad input") {
    TrainConfig cfg = parse_train_config_text(
        "epochs = 7\n"
        "strategy= two_stage  # trailing comment\n"
        "\n"
        "   # full-line comment\n"
        "lambda = 0.25\n"
        "camera_filter = CAM_A\n"
        "critic_stages = 4,8\n");
    CHECK(cfg.epochs == 7);
    CHECK(cfg.strategy == TrainStrategy::TwoStage);
    CHECK(cfg.lambda == 0.25);
    CHECK(cfg.camera_filter == "CAM_A");
    CHECK(cfg.critic_config().stage_channels == std::vector<int64_t>{4, 8});
    CHECK(cfg.batch_size == 16); // untouched default

    TrainConfig again = parse_train_config_text(dump_train_config(cfg));
    CHECK(dump_train_config(again) == dump_train_config(cfg));

    apply_config_override(cfg, "batch_size=5");
    CHECK(cfg.batch_size == 5);

    CHECK_THROWS_AS(parse_train_config_text("no_such_key = 1\n"), Error);
    CHECK_THROWS_AS(parse_train_config_text("epochs\n"), Error);
    CHECK_THROWS_AS(parse_train_config_text("epochs = soon\n"), Error);
    CHECK_THROWS_AS(parse_train_config_text("strategy = cautious\n"), Error);
    CHECK_THROWS_AS(apply_config_override(cfg, "lr_initial"), Error);
}

TEST_CASE("config validation rejects impossible combinations") {
    auto code_of = [](const TrainConfig& cfg) {
        try {
            cfg.validate();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::NotFound; // sentinel: validation passed
    };

    TrainConfig ok = small_cfg();
    ok.validate();

    TrainConfig c = ok;
    c.epochs = 0;
    CHECK(code_of(c) == ErrorCode::ConfigurationError);

    c = ok;
    c.enable_condlin = c.enable_sdl = c.enable_sal = c.enable_gan = false;
    CHECK(code_of(c) == ErrorCode::ConfigurationError);

    c = ok;
    c.strategy = TrainStrategy::Joint;
    c.enable_gan = false;
    CHECK(code_of(c) == ErrorCode::ConfigurationError);

    c = ok;
    c.enable_gan = true;
    c.patch_size = 18; // not divisible by 2^2 critic stages
    CHECK(code_of(c) == ErrorCode::ConfigurationError);

    c = ok;
    c.enable_gan = true;
    c.gen_depth = 1;
    CHECK(code_of(c) == ErrorCode::ConfigurationError);
}

TEST_CASE("patch assembly splits by scene and honors the camera filter") {
    TrainConfig cfg = small_cfg();
    PatchSet all = assemble_patches(shared_dataset(), cfg);
    CHECK(all.registry.cameras == std::vector<std::string>{"CAM_A", "CAM_B"});
    CHECK(all.n_train_scenes == 5);
    CHECK(all.n_val_scenes == 1);
    CHECK(all.train.size() == 20); // 5 scenes x 4 patches of 16x16 per 32x32 image
    CHECK(all.val.size() == 4);

    // Noise entries are exact integer differences of the stored images.
    for (int64_t j = 0; j < all.train[0].noise.numel(); ++j) {
        double v = all.train[0].noise.data()[j];
        CHECK(v == std::floor(v));
    }

    PatchSet again = assemble_patches(shared_dataset(), cfg);
    REQUIRE(again.train.size() == all.train.size());
    bool same = true;
    for (size_t i = 0; i < all.train.size() && same; ++i)
        for (int64_t j = 0; j < all.train[i].clean.numel(); ++j)
            if (all.train[i].clean.data()[j] != again.train[i].clean.data()[j]) {
                same = false;
                break;
            }
    CHECK(same);

    TrainConfig filtered = cfg;
    filtered.camera_filter = "CAM_A";
    PatchSet only_a = assemble_patches(shared_dataset(), filtered);
    CHECK(only_a.registry.cameras == std::vector<std::string>{"CAM_A"});
    CHECK(only_a.n_train_scenes + only_a.n_val_scenes == 4);
    for (const auto& p : only_a.train) CHECK(p.condition.camera == "CAM_A");
    for (const auto& p : only_a.val) CHECK(p.condition.camera == "CAM_A");

    filtered.camera_filter = "CAM_Z";
    CHECK_THROWS_AS(assemble_patches(shared_dataset(), filtered), Error);
}

TEST_CASE("single-scene manifests cannot form a validation split") {
    fs::path dir = scratch_root() / "single_scene";
    SynthCameraParams params = SynthCameraParams::hetero_only(0.1, 1.0, {{100, 1.0}});
    Rng rng(5);
    Manifest m = generate_oracle_dataset(params, {make_uniform_clean(rng, 16, 16)},
                                         {{"CAM_A", 100}}, 3, dir.string());
    TrainConfig cfg = small_cfg();
    try {
        assemble_patches(m, cfg);
        FAIL("expected a validation error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ValidationError);
    }
}

TEST_CASE("checkpoints round trip weights, configs and training state") {
    ConditionRegistry reg;
    reg.cameras = {"CAM_A", "CAM_B"};
    reg.isos = {100, 800};
    TrainConfig cfg = small_cfg();
    cfg.enable_gan = true;
    ModelBundle m = build_models(reg, cfg.flow_config(), true, cfg.generator_config(),
                                 cfg.critic_config(), 123);

    Rng scramble(999);
    auto randomize = [&](ParamStore& ps) {
        for (size_t i = 0; i < ps.size(); ++i)
            for (int64_t j = 0; j < ps.tensor(i).numel(); ++j)
                ps.tensor(i).data()[j] = scramble.normal();
    };
    randomize(m.flow.params());
    randomize(m.gen_params);
    randomize(m.critic_params);

    TrainState st;
    st.next_epoch = 4;
    st.step = 77;
    st.best_val_nll = -1.25;
    st.has_best = true;
    st.adam_flow = std::string("ab\0cd", 5); // opaque blob with an embedded null
    st.adam_gen = "";
    st.adam_critic = "xyz";

    std::string path = (scratch_root() / "ckpt_roundtrip.bin").string();
    save_checkpoint(path, m, &st);

    TrainState back;
    ModelBundle loaded = load_checkpoint(path, &back);
    CHECK(loaded.flow.registry() == reg);
    CHECK(loaded.flow.layer_specs() == m.flow.layer_specs());
    REQUIRE(loaded.has_gan());
    CHECK(params_identical(loaded.flow.params(), m.flow.params()));
    CHECK(params_identical(loaded.gen_params, m.gen_params));
    CHECK(params_identical(loaded.critic_params, m.critic_params));
    CHECK(back.next_epoch == 4);
    CHECK(back.step == 77);
    CHECK(back.best_val_nll == -1.25);
    CHECK(back.has_best);
    CHECK(back.adam_flow == st.adam_flow);
    CHECK(back.adam_gen == "");
    CHECK(back.adam_critic == "xyz");

    // Loading without asking for state must also work.
    ModelBundle stateless = load_checkpoint(path);
    CHECK(params_identical(stateless.flow.params(), m.flow.params()));

    // A weights-only checkpoint cannot be resumed from.
    std::string bare = (scratch_root() / "ckpt_bare.bin").string();
    save_checkpoint(bare, m);
    TrainState ignored;
    CHECK_THROWS_AS(load_checkpoint(bare, &ignored), Error);

    // Corruption is detected loudly.
    std::string data = file_bytes(path);
    std::string clipped_path = (scratch_root() / "ckpt_clipped.bin").string();
    std::ofstream(clipped_path, std::ios::binary)
        .write(data.data(), std::streamsize(data.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(clipped_path), Error);

    std::string garbled_path = (scratch_root() / "ckpt_garbled.bin").string();
    std::string garbled = data;
    garbled[0] = 'X';
    std::ofstream(garbled_path, std::ios::binary)
        .write(garbled.data(), std::streamsize(garbled.size()));
    CHECK_THROWS_AS(load_checkpoint(garbled_path), Error);

    CHECK_THROWS_AS(load_checkpoint((scratch_root() / "missing.bin").string()), Error);
}

TEST_CASE("a fresh run reproduces its first logged flow loss analytically") {
    TrainConfig cfg = small_cfg();
    cfg.augment = false;
    cfg.steps_per_epoch = 1;
    std::string dir = fresh_dir("out_first_step");
    train(cfg, shared_dataset(), dir);

    auto rows = read_log(dir + "/train_log.tsv");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0][0] == 0.0);
    double logged_nll = rows[0][1];
    CHECK(rows[0][5] == cfg.lr_initial);

    // Replay the data pipeline: same shuffle and dequantization streams, and
    // a freshly initialized stack is the identity map, so the latent equals
    // the dequantized noise exactly.
    PatchSet data = assemble_patches(shared_dataset(), cfg);
    Rng shuffle_rng(derive_seed(cfg.seed, uint64_t(StreamRole::Shuffle), 0));
    auto perm = shuffle_rng.permutation(int64_t(data.train.size()));
    Rng deq_rng(derive_seed(cfg.seed, uint64_t(StreamRole::Dequantize), 0));

    double half_log_2pi = 0.5 * std::log(8.0 * std::atan(1.0));
    double total = 0.0;
    int64_t per = data.train[0].noise.numel();
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
        const Tensor& noise = data.train[size_t(perm[size_t(b)])].noise;
        for (int64_t j = 0; j < per; ++j) {
            double z = noise.data()[j] + (deq_rng.uniform() - 0.5);
            total += 0.5 * z * z + half_log_2pi;
        }
    }
    double expected = total / double(cfg.batch_size);
    CHECK(logged_nll == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("identical seed and data give identical checkpoint bytes") {
    TrainConfig cfg = small_cfg();
    cfg.enable_gan = true;
    cfg.epochs = 2;
    cfg.steps_per_epoch = 2;
    std::string a = fresh_dir("out_det_a");
    std::string b = fresh_dir("out_det_b");
    TrainResult ra = train(cfg, shared_dataset(), a);
    TrainResult rb = train(cfg, shared_dataset(), b);
    CHECK(ra.epochs_run == 2);
    CHECK(ra.steps == 4);
    CHECK(file_bytes(a + "/ckpt_epoch1.bin") == file_bytes(b + "/ckpt_epoch1.bin"));
    CHECK(file_bytes(a + "/train_log.tsv") == file_bytes(b + "/train_log.tsv"));
    CHECK(file_bytes(a + "/val_log.tsv") == file_bytes(b + "/val_log.tsv"));
}

TEST_CASE("flow updates are untouched by the adversarial branch") {
    TrainConfig with_gan = small_cfg();
    with_gan.enable_gan = true;
    with_gan.steps_per_epoch = 5;
    TrainConfig without_gan = with_gan;
    without_gan.enable_gan = false;

    std::string a = fresh_dir("out_gan_on");
    std::string b = fresh_dir("out_gan_off");
    train(with_gan, shared_dataset(), a);
    train(without_gan, shared_dataset(), b);

    ModelBundle ma = load_checkpoint(a + "/ckpt_epoch0.bin");
    ModelBundle mb = load_checkpoint(b + "/ckpt_epoch0.bin");
    CHECK(ma.has_gan());
    CHECK(!mb.has_gan());
    CHECK(params_identical(ma.flow.params(), mb.flow.params()));

    // The adversarial side actually trained: its critic moved off its init.
    ModelBundle init = build_models(ma.flow.registry(), with_gan.flow_config(), true,
                                    with_gan.generator_config(), with_gan.critic_config(),
                                    with_gan.seed);
    CHECK(!params_identical(ma.critic_params, init.critic_params));
}

TEST_CASE("a resumed run continues exactly where the full run goes") {
    TrainConfig cfg = small_cfg();
    cfg.enable_gan = true;
    cfg.epochs = 4;
    cfg.steps_per_epoch = 2;

    std::string full_dir = fresh_dir("out_full");
    TrainResult full = train(cfg, shared_dataset(), full_dir);
    CHECK(full.epochs_run == 4);

    TrainConfig half = cfg;
    half.epochs = 2;
    std::string resumed_dir = fresh_dir("out_resumed");
    train(half, shared_dataset(), resumed_dir);
    TrainResult rest =
        resume_training(cfg, shared_dataset(), resumed_dir, resumed_dir + "/ckpt_epoch1.bin");
    CHECK(rest.epochs_run == 2);

    CHECK(file_bytes(full_dir + "/ckpt_epoch3.bin") ==
          file_bytes(resumed_dir + "/ckpt_epoch3.bin"));

    // The step-level trajectories agree row for row.
    auto rows_full = read_log(full_dir + "/train_log.tsv");
    auto rows_resumed = read_log(resumed_dir + "/train_log.tsv");
    REQUIRE(rows_full.size() == 8);
    REQUIRE(rows_resumed.size() == 8);
    for (size_t i = 0; i < rows_full.size(); ++i)
        for (size_t j = 0; j < 6; ++j) {
            if (std::isnan(rows_full[i][j])) {
                CHECK(std::isnan(rows_resumed[i][j]));
            } else {
                CHECK(rows_resumed[i][j] == doctest::Approx(rows_full[i][j]).epsilon(1e-9));
            }
        }
}

TEST_CASE("resume rejects a mismatched architecture or registry") {
    TrainConfig cfg = small_cfg();
    std::string dir = fresh_dir("out_mismatch");
    train(cfg, shared_dataset(), dir);

    TrainConfig other = cfg;
    other.flow_repeats = 2;
    CHECK_THROWS_AS(resume_training(other, shared_dataset(), fresh_dir("out_mismatch2"),
                                    dir + "/ckpt_epoch0.bin"),
                    Error);

    TrainConfig filtered = cfg;
    filtered.camera_filter = "CAM_A";
    CHECK_THROWS_AS(resume_training(filtered, shared_dataset(), fresh_dir("out_mismatch3"),
                                    dir + "/ckpt_epoch0.bin"),
                    Error);
}

TEST_CASE("ablation flags leave no trace of a disabled component") {
    TrainConfig cfg = small_cfg();
    cfg.enable_sdl = false;
    std::string dir = fresh_dir("out_ablate");
    train(cfg, shared_dataset(), dir);

    ModelBundle m = load_checkpoint(dir + "/ckpt_epoch0.bin");
    CHECK(!m.has_gan());
    CHECK(m.gen_params.size() == 0);
    CHECK(m.critic_params.size() == 0);
    bool saw_condlin = false, saw_sal = false;
    for (size_t i = 0; i < m.flow.params().size(); ++i) {
        const std::string& name = m.flow.params().name(i);
        CHECK(name.find(".sdl") == std::string::npos);
        saw_condlin = saw_condlin || name.find(".condlin") != std::string::npos;
        saw_sal = saw_sal || name.find(".sal") != std::string::npos;
    }
    CHECK(saw_condlin);
    CHECK(saw_sal);
    for (const auto& spec : m.flow.layer_specs()) CHECK(spec.kind != FlowLayerKind::Sdl);
}

TEST_CASE("gan-only ablation trains without any flow layers") {
    TrainConfig cfg = small_cfg();
    cfg.enable_condlin = cfg.enable_sdl = cfg.enable_sal = false;
    cfg.enable_gan = true;
    cfg.steps_per_epoch = 1;
    std::string dir = fresh_dir("out_gan_only");
    TrainResult res = train(cfg, shared_dataset(), dir);
    CHECK(res.epochs_run == 1);

    ModelBundle m = load_checkpoint(dir + "/ckpt_epoch0.bin");
    CHECK(m.flow.n_layers() == 0);
    for (size_t i = 0; i < m.flow.params().size(); ++i)
        CHECK(m.flow.params().name(i).rfind("encoder", 0) == 0);
    CHECK(m.gen_params.size() > 0);
}

TEST_CASE("training aborts with a divergence error and keeps earlier checkpoints") {
    TrainConfig cfg = small_cfg();
    std::string dir = fresh_dir("out_diverge");
    train(cfg, shared_dataset(), dir);

    TrainConfig explode = cfg;
    explode.epochs = 3;
    explode.lr_initial = 1e200;
    explode.steps_per_epoch = 3;
    try {
        resume_training(explode, shared_dataset(), dir, dir + "/ckpt_epoch0.bin");
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Diverged);
    }

    // The checkpoint written before the blow-up still loads.
    ModelBundle m = load_checkpoint(dir + "/ckpt_epoch0.bin");
    CHECK(m.flow.params().size() > 0);
}

TEST_CASE("two-stage runs flow first, then the adversarial pass on a frozen flow") {
    TrainConfig cfg = small_cfg();
    cfg.strategy = TrainStrategy::TwoStage;
    cfg.enable_gan = true;
    cfg.steps_per_epoch = 2;
    CHECK(total_epochs(cfg) == 2);

    std::string dir = fresh_dir("out_two_stage");
    TrainResult res = train(cfg, shared_dataset(), dir);
    CHECK(res.epochs_run == 2);

    ModelBundle after_flow = load_checkpoint(dir + "/ckpt_epoch0.bin");
    ModelBundle after_gan = load_checkpoint(dir + "/ckpt_epoch1.bin");
    CHECK(params_identical(after_flow.flow.params(), after_gan.flow.params()));
    CHECK(!params_identical(after_flow.critic_params, after_gan.critic_params));

    auto rows = read_log(dir + "/train_log.tsv");
    REQUIRE(rows.size() == 4);
    CHECK(!std::isnan(rows[0][1])); // flow phase: nll present ...
    CHECK(std::isnan(rows[0][2]));  // ... adversarial columns empty
    CHECK(std::isnan(rows[3][1]));  // adversarial phase: nll column empty ...
    CHECK(!std::isnan(rows[3][2])); // ... wgan present
    CHECK(!std::isnan(rows[3][4]));
}

TEST_CASE("joint strategy reaches the flow with adversarial gradients") {
    TrainConfig simultaneous = small_cfg();
    simultaneous.enable_gan = true;
    simultaneous.steps_per_epoch = 3;
    TrainConfig joint = simultaneous;
    joint.strategy = TrainStrategy::Joint;

    std::string a = fresh_dir("out_simultaneous");
    std::string b = fresh_dir("out_joint");
    train(simultaneous, shared_dataset(), a);
    train(joint, shared_dataset(), b);

    ModelBundle ms = load_checkpoint(a + "/ckpt_epoch0.bin");
    ModelBundle mj = load_checkpoint(b + "/ckpt_epoch0.bin");
    // Removing the stop-gradient changes the flow trajectory.
    CHECK(!params_identical(ms.flow.params(), mj.flow.params()));
}

TEST_CASE("validation loss is finite and tracked into the best checkpoint") {
    TrainConfig cfg = small_cfg();
    cfg.epochs = 2;
    std::string dir = fresh_dir("out_val");
    TrainResult res = train(cfg, shared_dataset(), dir);
    REQUIRE(res.val_nll_per_epoch.size() == 2);
    for (double v : res.val_nll_per_epoch) CHECK(std::isfinite(v));
    CHECK(res.best_val_nll <= res.val_nll_per_epoch[0]);
    CHECK(fs::exists(dir + "/ckpt_best.bin"));
    TrainState st;
    load_checkpoint(dir + "/ckpt_best.bin", &st);
    CHECK(st.best_val_nll == res.best_val_nll);
}

TEST_CASE("synthesized denoiser datasets honor the condition policy") {
    // Clean sources: one tiny image referenced by many manifest rows.
    fs::path src_dir = scratch_root() / "clean_src";
    fs::create_directories(src_dir);
    Rng rng(11);
    Tensor clean = make_uniform_clean(rng, 8, 8, 40.0, 215.0);
    save_png_rgb8((src_dir / "clean.png").string(), tensor_to_image(clean));

    auto clean_manifest_with = [&](int rows) {
        Manifest m;
        m.base_dir = src_dir.string();
        for (int i = 0; i < rows; ++i) {
            ManifestEntry e;
            e.clean_path = "clean.png";
            e.condition = {"src", 100};
            e.scene_id = "s" + std::to_string(i);
            m.entries.push_back(e);
        }
        m.registry = build_registry(m.entries);
        return m;
    };

    ConditionRegistry reg;
    reg.cameras = {"C1", "C2", "C3", "C4", "C5"};
    reg.isos = {100, 800};
    FlowStackConfig fc;
    fc.embed_dim = 4;
    fc.hidden_width = 4;
    fc.encoder_blocks = 1;
    fc.repeats = 1;
    ModelBundle models =
        build_models(reg, fc, false, GeneratorConfig{}, CriticConfig{}, 31);

    SUBCASE("fixed policy stamps every row with the requested condition") {
        DenoiserDatasetOptions opt;
        opt.policy = ConditionPolicy::Fixed;
        opt.fixed = {"C3", 800};
        opt.seed = 5;
        std::string dir = fresh_dir("denoiser_fixed");
        Manifest out = make_denoiser_dataset(models, clean_manifest_with(6), opt, dir);
        REQUIRE(out.entries.size() == 6);
        for (const auto& e : out.entries) {
            CHECK(e.condition.camera == "C3");
            CHECK(e.condition.iso == 800);
        }
        // Pairs load back and the noisy side is 8-bit valued.
        Manifest reloaded = load_manifest(dir + "/manifest.tsv");
        ImagePair pair = load_pair(reloaded, reloaded.entries[0]);
        REQUIRE(pair.noisy.has_value());
        for (int64_t j = 0; j < pair.noisy->numel(); ++j) {
            double v = pair.noisy->data()[j];
            CHECK(v == std::floor(v));
            CHECK(v >= 0.0);
            CHECK(v <= 255.0);
        }
        CHECK(reloaded.entries[0].scene_id == "s0");

        DenoiserDatasetOptions bad = opt;
        bad.fixed = {"NOPE", 800};
        CHECK_THROWS_AS(
            make_denoiser_dataset(models, clean_manifest_with(2), bad, fresh_dir("denoiser_bad")),
            Error);
    }

    SUBCASE("uniform policy spreads cameras within the binomial band") {
        DenoiserDatasetOptions opt;
        opt.policy = ConditionPolicy::Uniform;
        opt.seed = 17;
        std::string dir = fresh_dir("denoiser_uniform");
        Manifest out = make_denoiser_dataset(models, clean_manifest_with(1000), opt, dir);
        REQUIRE(out.entries.size() == 1000);
        std::map<std::string, int> camera_counts;
        std::set<int> isos_seen;
        for (const auto& e : out.entries) {
            camera_counts[e.condition.camera]++;
            isos_seen.insert(e.condition.iso);
        }
        REQUIRE(camera_counts.size() == 5);
        for (const auto& [cam, count] : camera_counts) {
            CHECK(count >= 140); // 200 +/- 60: inside three-sigma of Binomial(1000, 1/5)
            CHECK(count <= 260);
        }
        CHECK(isos_seen.size() == 2);

        // Same seed, same dataset: manifests and pixels reproduce exactly.
        std::string dir2 = fresh_dir("denoiser_uniform2");
        make_denoiser_dataset(models, clean_manifest_with(1000), opt, dir2);
        CHECK(file_bytes(dir + "/manifest.tsv") == file_bytes(dir2 + "/manifest.tsv"));
        CHECK(file_bytes(dir + "/noisy_00042.png") == file_bytes(dir2 + "/noisy_00042.png"));
    }
}
