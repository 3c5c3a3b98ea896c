#include "eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace nmfg {

void NoiseHistogram::add(double v) {
    if (!std::isfinite(v)) throw validation_error("histogram input must be finite");
    ++total;
    double idx = std::floor((v - kLo) / kWidth);
    if (idx < 0) {
        ++underflow;
    } else if (idx >= kBins) {
        ++overflow;
    } else {
        ++counts[static_cast<size_t>(idx)];
    }
}

void NoiseHistogram::add_all(const Tensor& t) {
    const double* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) add(p[i]);
}

double kl_divergence(const NoiseHistogram& real, const NoiseHistogram& synth) {
    if (real.in_range() <= 0 || synth.in_range() <= 0)
        throw validation_error("KL needs in-range mass in both histograms");
    constexpr double kSmooth = 1e-12;
    std::array<double, NoiseHistogram::kBins> p{}, q{};
    double p_sum = 0.0, q_sum = 0.0;
    for (int i = 0; i < NoiseHistogram::kBins; ++i) {
        p[static_cast<size_t>(i)] =
            static_cast<double>(real.counts[static_cast<size_t>(i)]) /
                static_cast<double>(real.in_range()) +
            kSmooth;
        q[static_cast<size_t>(i)] =
            static_cast<double>(synth.counts[static_cast<size_t>(i)]) /
                static_cast<double>(synth.in_range()) +
            kSmooth;
        p_sum += p[static_cast<size_t>(i)];
        q_sum += q[static_cast<size_t>(i)];
    }
    double kl = 0.0;
    for (int i = 0; i < NoiseHistogram::kBins; ++i) {
        double pi = p[static_cast<size_t>(i)] / p_sum;
        double qi = q[static_cast<size_t>(i)] / q_sum;
        kl += pi * std::log(pi / qi);
    }
    return kl;
}

double psnr(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw validation_error("psnr: shapes differ");
    if (a.numel() == 0) throw validation_error("psnr: empty tensors");
    const double* pa = a.data();
    const double* pb = b.data();
    double sq = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = pa[i] - pb[i];
        sq += d * d;
    }
    double mse = sq / static_cast<double>(a.numel());
    constexpr double kCap = 100.0;
    if (mse <= 0.0) return kCap;
    return std::min(kCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

namespace {

std::array<double, 11 * 11> ssim_window() {
    std::array<double, 11 * 11> w{};
    constexpr double sigma = 1.5;
    double sum = 0.0;
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 11; ++x) {
            double dy = y - 5, dx = x - 5;
            double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            w[static_cast<size_t>(y * 11 + x)] = v;
            sum += v;
        }
    for (double& v : w) v /= sum;
    return w;
}

} // namespace

double ssim(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw validation_error("ssim: shapes differ");
    if (a.rank() != 3) throw validation_error("ssim expects [C,H,W] tensors");
    int64_t c = a.dim(0), h = a.dim(1), w = a.dim(2);
    if (h < 11 || w < 11) throw validation_error("ssim needs at least 11x11 images");

    static const std::array<double, 121> win = ssim_window();
    constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);

    double channel_sum = 0.0;
    for (int64_t ch = 0; ch < c; ++ch) {
        const double* pa = a.data() + ch * h * w;
        const double* pb = b.data() + ch * h * w;
        double map_sum = 0.0;
        int64_t map_count = 0;
        for (int64_t top = 0; top + 11 <= h; ++top) {
            for (int64_t left = 0; left + 11 <= w; ++left) {
                double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
                for (int64_t y = 0; y < 11; ++y)
                    for (int64_t x = 0; x < 11; ++x) {
                        double g = win[static_cast<size_t>(y * 11 + x)];
                        double va = pa[(top + y) * w + left + x];
                        double vb = pb[(top + y) * w + left + x];
                        ma += g * va;
                        mb += g * vb;
                        aa += g * va * va;
                        bb += g * vb * vb;
                        ab += g * va * vb;
                    }
                double var_a = aa - ma * ma;
                double var_b = bb - mb * mb;
                double cov = ab - ma * mb;
                double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
                double den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
                map_sum += num / den;
                ++map_count;
            }
        }
        channel_sum += map_sum / static_cast<double>(map_count);
    }
    return channel_sum / static_cast<double>(c);
}

namespace {

void accumulate_pairs(const Manifest& m, const std::string* camera, const int* iso,
                      NoiseHistogram& hist) {
    for (const auto& e : m.entries) {
        if (e.noisy_path.empty()) continue;
        if (camera && e.condition.camera != *camera) continue;
        if (iso && e.condition.iso != *iso) continue;
        ImagePair pair = load_pair(m, e);
        const double* pc = pair.clean.data();
        const double* pn = pair.noisy->data();
        for (int64_t i = 0; i < pair.clean.numel(); ++i) hist.add(pn[i] - pc[i]);
    }
}

} // namespace

NoiseHistogram noise_histogram(const Manifest& m) {
    NoiseHistogram h;
    accumulate_pairs(m, nullptr, nullptr, h);
    return h;
}

NoiseHistogram noise_histogram(const Manifest& m, const std::string& camera, int iso) {
    NoiseHistogram h;
    accumulate_pairs(m, &camera, &iso, h);
    return h;
}

std::vector<KlGroupRow> kl_report(const Manifest& real, const Manifest& synth) {
    std::set<std::pair<std::string, int>> real_groups, shared;
    for (const auto& e : real.entries)
        if (!e.noisy_path.empty()) real_groups.insert({e.condition.camera, e.condition.iso});
    for (const auto& e : synth.entries)
        if (!e.noisy_path.empty() && real_groups.count({e.condition.camera, e.condition.iso}))
            shared.insert({e.condition.camera, e.condition.iso});
    if (shared.empty())
        throw validation_error("no (camera, iso) group present in both manifests");

    std::vector<KlGroupRow> rows;
    NoiseHistogram real_all, synth_all;
    for (const auto& [camera, iso] : shared) {
        NoiseHistogram hr = noise_histogram(real, camera, iso);
        NoiseHistogram hs = noise_histogram(synth, camera, iso);
        KlGroupRow row;
        row.camera = camera;
        row.iso = iso;
        row.kl = kl_divergence(hr, hs);
        row.real_values = hr.total;
        row.synth_values = hs.total;
        rows.push_back(row);
        for (int i = 0; i < NoiseHistogram::kBins; ++i) {
            real_all.counts[static_cast<size_t>(i)] += hr.counts[static_cast<size_t>(i)];
            synth_all.counts[static_cast<size_t>(i)] += hs.counts[static_cast<size_t>(i)];
        }
        real_all.total += hr.total;
        real_all.underflow += hr.underflow;
        real_all.overflow += hr.overflow;
        synth_all.total += hs.total;
        synth_all.underflow += hs.underflow;
        synth_all.overflow += hs.overflow;
    }
    KlGroupRow overall;
    overall.camera = "overall";
    overall.iso = 0;
    overall.kl = kl_divergence(real_all, synth_all);
    overall.real_values = real_all.total;
    overall.synth_values = synth_all.total;
    rows.push_back(overall);
    return rows;
}

void write_kl_report_csv(const std::vector<KlGroupRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw not_found("cannot write " + path);
    out << "camera,iso,kl,real_values,synth_values\n";
    out.precision(10);
    for (const auto& r : rows)
        out << r.camera << ',' << r.iso << ',' << r.kl << ',' << r.real_values << ','
            << r.synth_values << '\n';
}

} // namespace nmfg
