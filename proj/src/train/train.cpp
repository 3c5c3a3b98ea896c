#include "train/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "core/error.hpp"
#include "core/ops.hpp"
#include "data/image.hpp"

namespace nmfg {

namespace {

uint64_t role_seed(uint64_t base, StreamRole role, uint64_t tag) {
    return derive_seed(base, static_cast<uint64_t>(role), tag);
}

Tensor stack3(const std::vector<Tensor>& items) {
    int64_t b = static_cast<int64_t>(items.size());
    int64_t c = items[0].dim(0), h = items[0].dim(1), w = items[0].dim(2);
    Tensor out = Tensor::zeros({b, c, h, w});
    int64_t per = c * h * w;
    for (int64_t i = 0; i < b; ++i)
        std::memcpy(out.data() + i * per, items[i].data(),
                    static_cast<size_t>(per) * sizeof(double));
    return out;
}

std::string serialize_adam(const Adam& adam) {
    if (adam.steps_taken() == 0) return {};
    std::ostringstream out(std::ios::binary);
    adam.save(out);
    return out.str();
}

void restore_adam(Adam& adam, const std::string& blob, const ParamStore& params) {
    if (blob.empty()) return;
    std::istringstream in(blob, std::ios::binary);
    adam.load(in, params);
}

struct Batch {
    Tensor clean;  // [B,3,ps,ps]
    Tensor noise;  // [B,3,ps,ps]
    std::vector<CameraCondition> conds;
};

Batch gather_batch(const std::vector<TrainPatch>& pool, const std::vector<int64_t>& order,
                   int64_t first, int64_t count, Rng* aug_rng) {
    std::vector<Tensor> cleans, noises;
    Batch b;
    cleans.reserve(static_cast<size_t>(count));
    noises.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        const TrainPatch& p = pool[static_cast<size_t>(order[static_cast<size_t>(first + i)])];
        if (aug_rng) {
            int k = static_cast<int>(aug_rng->uniform_int(8));
            cleans.push_back(dihedral_tensor(p.clean, k));
            noises.push_back(dihedral_tensor(p.noise, k));
        } else {
            cleans.push_back(p.clean);
            noises.push_back(p.noise);
        }
        b.conds.push_back(p.condition);
    }
    b.clean = stack3(cleans);
    b.noise = stack3(noises);
    return b;
}

std::vector<int64_t> identity_order(size_t n) {
    std::vector<int64_t> v(n);
    for (size_t i = 0; i < n; ++i) v[i] = static_cast<int64_t>(i);
    return v;
}

void require_finite(double v, const char* what, int64_t step) {
    if (!std::isfinite(v))
        throw diverged_error(std::string(what) + " became non-finite at step " +
                             std::to_string(step));
}

class Trainer {
public:
    Trainer(const TrainConfig& cfg, const Manifest& manifest, std::string out_dir)
        : cfg_(cfg), out_dir_(std::move(out_dir)) {
        cfg_.validate();
        data_ = assemble_patches(manifest, cfg_);
        std::filesystem::create_directories(out_dir_);
    }

    TrainResult run_fresh() {
        models_ = build_models(data_.registry, cfg_.flow_config(), cfg_.enable_gan,
                               cfg_.generator_config(), cfg_.critic_config(), cfg_.seed);
        return run_loop(false);
    }

    TrainResult run_resume(const std::string& ckpt) {
        TrainState st;
        models_ = load_checkpoint(ckpt, &st);
        if (models_.flow.registry() != data_.registry)
            throw config_error("checkpoint registry does not match the manifest/filter");
        if (models_.flow.layer_specs() != cfg_.flow_config().layer_specs())
            throw config_error("checkpoint flow architecture differs from the config");
        if (models_.has_gan() != cfg_.enable_gan)
            throw config_error("checkpoint and config disagree about enable_gan");
        restore_adam(adam_flow_, st.adam_flow, models_.flow.params());
        if (models_.has_gan()) {
            restore_adam(adam_gen_, st.adam_gen, models_.gen_params);
            restore_adam(adam_critic_, st.adam_critic, models_.critic_params);
        }
        start_epoch_ = st.next_epoch;
        step_ = st.step;
        best_val_ = st.best_val_nll;
        has_best_ = st.has_best;
        return run_loop(true);
    }

private:
    void phase_for_epoch(int epoch, bool* flow_phase, bool* gan_phase) const {
        if (cfg_.strategy == TrainStrategy::TwoStage) {
            *flow_phase = epoch < cfg_.epochs;
            *gan_phase = !*flow_phase;
        } else {
            *flow_phase = true;
            *gan_phase = cfg_.enable_gan;
        }
    }

    TrainResult run_loop(bool resumed) {
        int n_epochs = total_epochs(cfg_);
        auto mode = resumed ? (std::ios::out | std::ios::app) : std::ios::out;
        std::ofstream log(out_dir_ + "/train_log.tsv", mode);
        std::ofstream val_log(out_dir_ + "/val_log.tsv", mode);
        if (!log || !val_log) throw not_found("cannot open training logs in " + out_dir_);
        if (!resumed) {
            log << "step\tnll\twgan\tgp\tadv\tlr\n";
            val_log << "epoch\tval_nll\tlr\n";
        }
        log << std::setprecision(12);
        val_log << std::setprecision(12);

        TrainResult res;
        for (int epoch = start_epoch_; epoch < n_epochs; ++epoch) {
            run_epoch(epoch, log);
            double val_nll = validate(epoch);
            double lr = cfg_.lr_for_epoch(epoch);
            val_log << epoch << '\t' << val_nll << '\t' << lr << '\n' << std::flush;
            res.val_nll_per_epoch.push_back(val_nll);

            bool improved = !has_best_ || val_nll < best_val_;
            if (improved) {
                best_val_ = val_nll;
                has_best_ = true;
            }
            TrainState st;
            st.next_epoch = epoch + 1;
            st.step = step_;
            st.best_val_nll = best_val_;
            st.has_best = has_best_;
            st.adam_flow = serialize_adam(adam_flow_);
            st.adam_gen = serialize_adam(adam_gen_);
            st.adam_critic = serialize_adam(adam_critic_);

            std::string path = out_dir_ + "/ckpt_epoch" + std::to_string(epoch) + ".bin";
            save_checkpoint(path, models_, &st);
            res.last_checkpoint = path;
            if (improved) save_checkpoint(out_dir_ + "/ckpt_best.bin", models_, &st);
            ++res.epochs_run;
        }
        res.best_checkpoint = out_dir_ + "/ckpt_best.bin";
        res.steps = step_;
        res.best_val_nll = best_val_;
        return res;
    }

    void run_epoch(int epoch, std::ofstream& log) {
        bool flow_phase = false, gan_phase = false;
        phase_for_epoch(epoch, &flow_phase, &gan_phase);
        double lr = cfg_.lr_for_epoch(epoch);

        Rng shuffle_rng(role_seed(cfg_.seed, StreamRole::Shuffle, static_cast<uint64_t>(epoch)));
        Rng aug_rng(role_seed(cfg_.seed, StreamRole::Augment, static_cast<uint64_t>(epoch)));
        Rng deq_rng(role_seed(cfg_.seed, StreamRole::Dequantize, static_cast<uint64_t>(epoch)));
        Rng gan_rng(role_seed(cfg_.seed, StreamRole::GanNoise, static_cast<uint64_t>(epoch)));

        int64_t n = static_cast<int64_t>(data_.train.size());
        auto perm = shuffle_rng.permutation(n);
        int64_t bs = std::min<int64_t>(cfg_.batch_size, n);
        int64_t n_batches = n / bs;
        if (cfg_.steps_per_epoch > 0) n_batches = std::min<int64_t>(n_batches, cfg_.steps_per_epoch);

        for (int64_t b = 0; b < n_batches; ++b) {
            Batch batch =
                gather_batch(data_.train, perm, b * bs, bs, cfg_.augment ? &aug_rng : nullptr);
            try {
                run_step(batch, flow_phase, gan_phase, lr, deq_rng, gan_rng, log);
            } catch (const Error& err) {
                if (err.code() == ErrorCode::NumericalError)
                    throw diverged_error(std::string("training diverged at step ") +
                                         std::to_string(step_) + ": " + err.what());
                throw;
            }
            ++step_;
        }
    }

    void run_step(const Batch& batch, bool flow_phase, bool gan_phase, double lr, Rng& deq_rng,
                  Rng& gan_rng, std::ofstream& log) {
        double nll_val = std::nan(""), wgan = std::nan(""), gp = std::nan(""),
               adv = std::nan("");

        // The real noise is dequantized on every step so the draw order is
        // independent of which phases are active.
        Tensor deq = dequantize(batch.noise, deq_rng);

        if (flow_phase) {
            FlowContext ctx = models_.flow.make_context(batch.clean, batch.conds);
            Tensor nll = models_.flow.nll(deq, ctx);
            nll_val = nll.item();
            require_finite(nll_val, "flow NLL", step_);
            // With every layer kind ablated away the loss is a constant and
            // there is nothing to step.
            if (nll.requires_grad()) {
                auto grads = gradients(nll, models_.flow.params().tensors());
                adam_flow_.step(models_.flow.params(), grads, lr);
            }
        }

        if (gan_phase) {
            bool joint = cfg_.strategy == TrainStrategy::Joint;
            // Sampled after the flow update, so the generator always refines
            // the current pixel-wise model.
            Tensor n_prime;
            if (joint) {
                n_prime = models_.flow.sample(batch.clean, batch.conds, gan_rng);
            } else {
                NoGradGuard ng;
                n_prime = models_.flow.sample(batch.clean, batch.conds, gan_rng);
            }

            CriticFn critic_fn = [this](const Tensor& x6) { return (*models_.critic)(x6); };
            GanLossWeights weights{cfg_.lambda, cfg_.alpha};

            Tensor fake_plain;
            {
                NoGradGuard ng;
                fake_plain = refine(*models_.gen, joint ? detach(n_prime) : n_prime);
            }
            GanLossTerms terms;
            Tensor loss_d =
                critic_loss(critic_fn, batch.clean, deq, fake_plain, weights, gan_rng, &terms);
            double loss_d_val = loss_d.item();
            require_finite(loss_d_val, "critic loss", step_);
            auto grads_d = gradients(loss_d, models_.critic_params.tensors());
            adam_critic_.step(models_.critic_params, grads_d, lr);
            wgan = terms.wgan;
            gp = terms.gp;

            // Generator step. Under the joint strategy the sampled noise still
            // carries its graph, so these gradients also reach the flow.
            Tensor refined = refine(*models_.gen, n_prime);
            Tensor adv_t = adversarial_loss(critic_fn, batch.clean, refined, cfg_.lambda);
            adv = adv_t.item();
            require_finite(adv, "adversarial loss", step_);
            std::vector<Tensor> wrt = models_.gen_params.tensors();
            size_t n_gen = wrt.size();
            if (joint) {
                auto fp = models_.flow.params().tensors();
                wrt.insert(wrt.end(), fp.begin(), fp.end());
            }
            auto grads_g = gradients(adv_t, wrt);
            std::vector<Tensor> gen_part(grads_g.begin(),
                                         grads_g.begin() + static_cast<std::ptrdiff_t>(n_gen));
            adam_gen_.step(models_.gen_params, gen_part, lr);
            if (joint) {
                std::vector<Tensor> flow_part(
                    grads_g.begin() + static_cast<std::ptrdiff_t>(n_gen), grads_g.end());
                adam_flow_.step(models_.flow.params(), flow_part, lr);
            }
        }

        log << step_ << '\t' << nll_val << '\t' << wgan << '\t' << gp << '\t' << adv << '\t'
            << lr << '\n';
    }

    double validate(int epoch) {
        NoGradGuard ng;
        Rng val_rng(role_seed(cfg_.seed, StreamRole::Validation, static_cast<uint64_t>(epoch)));
        auto order = identity_order(data_.val.size());
        int64_t n = static_cast<int64_t>(data_.val.size());
        int64_t bs = std::min<int64_t>(cfg_.batch_size, n);
        double total = 0.0;
        int64_t counted = 0, batches = 0;
        for (int64_t first = 0; first < n; first += bs) {
            if (cfg_.val_max_batches > 0 && batches >= cfg_.val_max_batches) break;
            int64_t count = std::min<int64_t>(bs, n - first);
            Batch batch = gather_batch(data_.val, order, first, count, nullptr);
            Tensor deq = dequantize(batch.noise, val_rng);
            FlowContext ctx = models_.flow.make_context(batch.clean, batch.conds);
            double nll = models_.flow.nll(deq, ctx).item();
            total += nll * static_cast<double>(count);
            counted += count;
            ++batches;
        }
        return total / static_cast<double>(counted);
    }

    TrainConfig cfg_;
    std::string out_dir_;
    PatchSet data_;
    ModelBundle models_;
    Adam adam_flow_, adam_gen_, adam_critic_;
    int start_epoch_ = 0;
    int64_t step_ = 0;
    double best_val_ = 0.0;
    bool has_best_ = false;
};

} // namespace

int total_epochs(const TrainConfig& cfg) {
    return cfg.strategy == TrainStrategy::TwoStage ? 2 * cfg.epochs : cfg.epochs;
}

PatchSet assemble_patches(const Manifest& manifest, const TrainConfig& cfg) {
    std::vector<ManifestEntry> kept;
    for (const auto& e : manifest.entries)
        if (cfg.camera_filter.empty() || e.condition.camera == cfg.camera_filter)
            kept.push_back(e);
    if (kept.empty())
        throw validation_error("camera filter '" + cfg.camera_filter +
                               "' leaves no training data");
    for (const auto& e : kept)
        if (e.noisy_path.empty())
            throw validation_error("training needs clean/noisy pairs; '" + e.clean_path +
                                   "' has no noisy image");

    std::set<std::string> scene_set;
    for (const auto& e : kept) scene_set.insert(e.scene_id);
    std::vector<std::string> scenes(scene_set.begin(), scene_set.end());
    if (scenes.size() < 2)
        throw validation_error("need at least two scenes for a train/validation split");

    Rng split_rng(role_seed(cfg.seed, StreamRole::Split, 0));
    auto perm = split_rng.permutation(static_cast<int64_t>(scenes.size()));
    int64_t n_scenes = static_cast<int64_t>(scenes.size());
    int64_t n_train =
        std::clamp<int64_t>(std::llround(0.8 * static_cast<double>(n_scenes)), 1, n_scenes - 1);
    std::set<std::string> train_scenes;
    for (int64_t i = 0; i < n_train; ++i)
        train_scenes.insert(scenes[static_cast<size_t>(perm[static_cast<size_t>(i)])]);

    PatchSet out;
    out.registry = build_registry(kept);
    out.n_train_scenes = static_cast<int>(n_train);
    out.n_val_scenes = static_cast<int>(n_scenes - n_train);
    for (const auto& e : kept) {
        ImagePair pair = load_pair(manifest, e);
        bool in_train = train_scenes.count(e.scene_id) > 0;
        for (const auto& patch : extract_patches(pair, cfg.patch_size, cfg.patch_stride)) {
            TrainPatch tp;
            tp.clean = patch.clean;
            tp.noise = sub(*patch.noisy, patch.clean);
            tp.condition = patch.condition;
            (in_train ? out.train : out.val).push_back(std::move(tp));
        }
    }
    return out;
}

TrainResult train(const TrainConfig& cfg, const Manifest& manifest, const std::string& out_dir) {
    Trainer t(cfg, manifest, out_dir);
    return t.run_fresh();
}

TrainResult resume_training(const TrainConfig& cfg, const Manifest& manifest,
                            const std::string& out_dir, const std::string& checkpoint_path) {
    Trainer t(cfg, manifest, out_dir);
    return t.run_resume(checkpoint_path);
}

Manifest make_denoiser_dataset(const ModelBundle& models, const Manifest& clean_manifest,
                               const DenoiserDatasetOptions& opt, const std::string& out_dir) {
    const ConditionRegistry& reg = models.flow.registry();
    if (opt.policy == ConditionPolicy::Fixed) {
        reg.camera_index(opt.fixed.camera); // both throw UnknownCondition on a bad value
        reg.iso_index(opt.fixed.iso);
    }
    if (opt.policy == ConditionPolicy::FromManifest) {
        for (const ManifestEntry& e : clean_manifest.entries) {
            reg.camera_index(e.condition.camera);
            reg.iso_index(e.condition.iso);
        }
    }
    if (clean_manifest.entries.empty())
        throw validation_error("clean manifest has no entries to synthesize from");
    std::filesystem::create_directories(out_dir);

    Manifest out;
    out.base_dir = out_dir;
    const Generator* gen = models.gen ? &*models.gen : nullptr;
    for (size_t i = 0; i < clean_manifest.entries.size(); ++i) {
        const ManifestEntry& src = clean_manifest.entries[i];
        ImagePair pair = load_pair(clean_manifest, src);
        Rng rng(role_seed(opt.seed, StreamRole::Synthesis, i));

        CameraCondition cond;
        if (opt.policy == ConditionPolicy::Fixed) {
            cond = opt.fixed;
        } else if (opt.policy == ConditionPolicy::FromManifest) {
            cond = src.condition;
        } else {
            cond.camera = reg.cameras[static_cast<size_t>(
                rng.uniform_int(static_cast<int64_t>(reg.cameras.size())))];
            cond.iso = reg.isos[static_cast<size_t>(
                rng.uniform_int(static_cast<int64_t>(reg.isos.size())))];
        }

        SynthesisResult syn = end_to_end_synthesize(models.flow, gen, pair.clean, cond, rng);

        std::ostringstream stem;
        stem << std::setw(5) << std::setfill('0') << i;
        std::string clean_name = "clean_" + stem.str() + ".png";
        std::string noisy_name = "noisy_" + stem.str() + ".png";
        save_png_rgb8(out_dir + "/" + clean_name, tensor_to_image(pair.clean));
        save_png_rgb8(out_dir + "/" + noisy_name, tensor_to_image(syn.noisy));

        ManifestEntry row;
        row.clean_path = clean_name;
        row.noisy_path = noisy_name;
        row.condition = cond;
        row.scene_id = src.scene_id;
        out.entries.push_back(row);
    }
    out.registry = build_registry(out.entries);
    save_manifest(out, out_dir + "/manifest.tsv");
    return out;
}

} // namespace nmfg
