#include "eval/denoiser.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "core/error.hpp"
#include "core/ops.hpp"
#include "eval/metrics.hpp"
#include "train/binio.hpp"

namespace nmfg {

namespace {

constexpr char kMagic[4] = {'N', 'M', 'F', 'D'};
constexpr uint32_t kVersion = 1;

} // namespace

Denoiser::Denoiser(const DenoiserSpec& spec, Rng& rng) : spec_(spec) {
    if (spec.depth < 2) throw config_error("denoiser depth must be >= 2");
    if (spec.channels < 1) throw config_error("denoiser channels must be >= 1");
    for (int i = 0; i < spec.depth; ++i) {
        int64_t cin = i == 0 ? 3 : spec.channels;
        int64_t cout = i == spec.depth - 1 ? 3 : spec.channels;
        // Zero-initializing the last layer makes the residual denoiser start
        // as the identity map.
        double scale = i == spec.depth - 1 ? 0.0 : 1.0;
        convs_.emplace_back(cin, cout, 3, 1, scale, rng);
    }
    for (size_t i = 0; i < convs_.size(); ++i)
        convs_[i].collect("conv" + std::to_string(i), params_);
}

Tensor Denoiser::operator()(const Tensor& noisy) const {
    if (noisy.rank() != 4 || noisy.dim(1) != 3)
        throw validation_error("denoiser expects [N,3,H,W] input");
    Tensor h = mul_scalar(noisy, 1.0 / 255.0);
    for (size_t i = 0; i + 1 < convs_.size(); ++i) h = relu(convs_[i](h));
    Tensor pred = mul_scalar(convs_.back()(h), 255.0);
    Tensor out = spec_.residual ? sub(noisy, pred) : pred;
    if (!out.all_finite()) throw numerical_error("denoiser produced non-finite values");
    return out;
}

Tensor Denoiser::denoise_image(const Tensor& noisy) const {
    if (noisy.rank() != 3) throw validation_error("denoise_image expects [3,H,W]");
    NoGradGuard ng;
    Tensor batched = reshape(noisy, {1, noisy.dim(0), noisy.dim(1), noisy.dim(2)});
    Tensor out = clamp((*this)(batched), 0.0, 255.0);
    return reshape(out, noisy.shape());
}

void Denoiser::collect(const std::string& prefix, ParamStore& out) const {
    for (size_t i = 0; i < convs_.size(); ++i)
        convs_[i].collect(prefix + ".conv" + std::to_string(i), out);
}

void save_denoiser(const std::string& path, const Denoiser& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw not_found("cannot open denoiser checkpoint for writing: " + path);
    wr_bytes(out, kMagic, 4);
    wr_u32(out, kVersion);
    wr_i32(out, d.spec().depth);
    wr_i64(out, d.spec().channels);
    wr_u8(out, d.spec().residual ? 1 : 0);
    write_weight_section(out, d.params());
    out.flush();
    if (!out) throw not_found("write failed for denoiser checkpoint: " + path);
}

Denoiser load_denoiser(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw not_found("cannot open denoiser checkpoint: " + path);
    char magic[4];
    rd_bytes(in, magic, 4, path);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw format_error("not a denoiser checkpoint: " + path);
    uint32_t version = rd_u32(in, path);
    if (version != kVersion)
        throw format_error("unsupported denoiser checkpoint version " + std::to_string(version));
    DenoiserSpec spec;
    spec.depth = rd_i32(in, path);
    spec.channels = rd_i64(in, path);
    spec.residual = rd_u8(in, path) != 0;
    Rng dummy(0);
    Denoiser d(spec, dummy);
    read_weight_section(in, d.params(), "denoiser", path);
    return d;
}

uint32_t denoiser_format_version() { return kVersion; }

namespace {

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

struct DenoiserBatch {
    Tensor clean, noisy;  // [B,3,ps,ps]
};

DenoiserBatch gather(const std::vector<TrainPatch>& pool, const std::vector<int64_t>& order,
                     int64_t first, int64_t count, Rng* aug_rng) {
    std::vector<Tensor> cleans, noisies;
    for (int64_t i = 0; i < count; ++i) {
        const TrainPatch& p = pool[static_cast<size_t>(order[static_cast<size_t>(first + i)])];
        Tensor clean = p.clean;
        Tensor noisy = add(p.clean, p.noise);
        if (aug_rng) {
            int k = static_cast<int>(aug_rng->uniform_int(8));
            clean = dihedral_tensor(clean, k);
            noisy = dihedral_tensor(noisy, k);
        }
        cleans.push_back(clean);
        noisies.push_back(noisy);
    }
    return {stack3(cleans), stack3(noisies)};
}

} // namespace

DenoiserTrainResult train_denoiser(const DenoiserSpec& spec, const Manifest& manifest,
                                   const TrainConfig& cfg, const std::string& out_dir) {
    if (cfg.epochs < 1) throw config_error("epochs must be >= 1");
    if (!(cfg.lr_initial > 0)) throw config_error("lr_initial must be positive");
    PatchSet data = assemble_patches(manifest, cfg);
    std::filesystem::create_directories(out_dir);

    Rng init_rng(derive_seed(cfg.seed, static_cast<uint64_t>(StreamRole::DenoiserInit), 0));
    Denoiser model(spec, init_rng);
    Adam adam;

    DenoiserTrainResult res;
    std::string best_path = out_dir + "/dn_best.bin";
    bool has_best = false;
    int64_t step = 0;

    int64_t n = static_cast<int64_t>(data.train.size());
    int64_t bs = std::min<int64_t>(cfg.batch_size, n);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cfg.lr_for_epoch(epoch);
        Rng shuffle_rng(
            derive_seed(cfg.seed, static_cast<uint64_t>(StreamRole::Shuffle), uint64_t(epoch)));
        Rng aug_rng(
            derive_seed(cfg.seed, static_cast<uint64_t>(StreamRole::Augment), uint64_t(epoch)));
        auto perm = shuffle_rng.permutation(n);
        int64_t n_batches = n / bs;
        if (cfg.steps_per_epoch > 0) n_batches = std::min<int64_t>(n_batches, cfg.steps_per_epoch);

        for (int64_t b = 0; b < n_batches; ++b) {
            DenoiserBatch batch =
                gather(data.train, perm, b * bs, bs, cfg.augment ? &aug_rng : nullptr);
            try {
                Tensor denoised = model(batch.noisy);
                Tensor loss = mean_all(square(sub(denoised, batch.clean)));
                double loss_val = loss.item();
                if (!std::isfinite(loss_val))
                    throw diverged_error("denoiser loss became non-finite at step " +
                                         std::to_string(step));
                if (loss.requires_grad()) {
                    auto grads = gradients(loss, model.params().tensors());
                    adam.step(model.params(), grads, lr);
                }
            } catch (const Error& err) {
                if (err.code() == ErrorCode::NumericalError)
                    throw diverged_error(std::string("denoiser training diverged at step ") +
                                         std::to_string(step) + ": " + err.what());
                throw;
            }
            ++step;
        }

        // Validation PSNR on the held-out patches, deterministic order.
        double psnr_sum = 0.0;
        int64_t psnr_count = 0;
        {
            NoGradGuard ng;
            std::vector<int64_t> order(data.val.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
            int64_t vn = static_cast<int64_t>(data.val.size());
            int64_t vbs = std::min<int64_t>(cfg.batch_size, vn);
            int64_t batches = 0;
            for (int64_t first = 0; first < vn; first += vbs) {
                if (cfg.val_max_batches > 0 && batches >= cfg.val_max_batches) break;
                int64_t count = std::min<int64_t>(vbs, vn - first);
                DenoiserBatch batch = gather(data.val, order, first, count, nullptr);
                Tensor denoised = clamp(model(batch.noisy), 0.0, 255.0);
                int64_t per = 3 * batch.clean.dim(2) * batch.clean.dim(3);
                for (int64_t i = 0; i < count; ++i) {
                    Tensor d = Tensor::from_data(
                        {3, batch.clean.dim(2), batch.clean.dim(3)},
                        std::vector<double>(denoised.data() + i * per,
                                            denoised.data() + (i + 1) * per));
                    Tensor cl = Tensor::from_data(
                        {3, batch.clean.dim(2), batch.clean.dim(3)},
                        std::vector<double>(batch.clean.data() + i * per,
                                            batch.clean.data() + (i + 1) * per));
                    psnr_sum += psnr(d, cl);
                    ++psnr_count;
                }
                ++batches;
            }
        }
        double val_psnr = psnr_sum / static_cast<double>(psnr_count);
        res.val_psnr_per_epoch.push_back(val_psnr);
        if (!has_best || val_psnr > res.best_val_psnr) {
            res.best_val_psnr = val_psnr;
            has_best = true;
            save_denoiser(best_path, model);
        }
    }
    res.checkpoint = best_path;
    res.steps = step;
    return res;
}

DenoiserEvalResult evaluate_denoiser(const Denoiser& d, const Manifest& test,
                                     const std::string& csv_path) {
    std::ofstream csv;
    if (!csv_path.empty()) {
        csv.open(csv_path);
        if (!csv) throw not_found("cannot write " + csv_path);
        csv << "image_id,psnr,ssim\n";
        csv.precision(10);
    }
    DenoiserEvalResult res;
    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (const auto& e : test.entries) {
        if (e.noisy_path.empty()) continue;
        ImagePair pair = load_pair(test, e);
        Tensor denoised = d.denoise_image(*pair.noisy);
        double p = psnr(denoised, pair.clean);
        double s = ssim(denoised, pair.clean);
        psnr_sum += p;
        ssim_sum += s;
        ++res.images;
        if (csv.is_open()) csv << e.noisy_path << ',' << p << ',' << s << '\n';
    }
    if (res.images == 0) throw validation_error("no clean/noisy pairs to evaluate");
    res.mean_psnr = psnr_sum / static_cast<double>(res.images);
    res.mean_ssim = ssim_sum / static_cast<double>(res.images);
    return res;
}

} // namespace nmfg
