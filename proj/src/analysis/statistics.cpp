#include "analysis/statistics.hpp"

#include <cmath>
#include <map>

#include "core/error.hpp"

namespace nmfg {

namespace {

constexpr int64_t kHeteroBins = 32;
constexpr double kHeteroBinWidth = 8.0;
constexpr int64_t kHeteroMinBinCount = 100;
constexpr int64_t kHeteroMinPixels = 10000;

struct BinAcc {
    int64_t count = 0;
    double sum = 0.0;     // noise
    double sumsq = 0.0;   // noise^2
    double sum_x = 0.0;   // clean intensity
};

void require_noisy(const std::vector<ImagePair>& pairs, const char* who) {
    if (pairs.empty()) throw insufficient_data(std::string(who) + ": no image pairs supplied");
    for (const auto& p : pairs)
        if (!p.noisy)
            throw validation_error(std::string(who) + ": pair without a noisy image (scene " +
                                   p.scene_id + ")");
}

} // namespace

HeteroParams estimate_hetero(const std::vector<ImagePair>& pairs) {
    require_noisy(pairs, "estimate_hetero");

    HeteroParams out;
    for (int64_t c = 0; c < 3; ++c) {
        std::array<BinAcc, kHeteroBins> bins{};
        int64_t total = 0;
        for (const auto& p : pairs) {
            int64_t hw = p.clean.dim(1) * p.clean.dim(2);
            const double* pc = p.clean.data() + c * hw;
            const double* pn = p.noisy->data() + c * hw;
            for (int64_t i = 0; i < hw; ++i) {
                double x = pc[i];
                double noise = pn[i] - x;
                int64_t b = int64_t(x / kHeteroBinWidth);
                if (b < 0) b = 0;
                if (b >= kHeteroBins) b = kHeteroBins - 1;
                auto& acc = bins[size_t(b)];
                ++acc.count;
                acc.sum += noise;
                acc.sumsq += noise * noise;
                acc.sum_x += x;
                ++total;
            }
        }
        if (total < kHeteroMinPixels)
            throw insufficient_data("estimate_hetero: need at least " +
                                    std::to_string(kHeteroMinPixels) +
                                    " pixels per channel, have " + std::to_string(total));

        // qualifying bins -> (mean intensity, sample variance)
        std::vector<double> xs, ys;
        for (const auto& b : bins) {
            if (b.count < kHeteroMinBinCount) continue;
            double mean = b.sum / double(b.count);
            double var = (b.sumsq - double(b.count) * mean * mean) / double(b.count - 1);
            xs.push_back(b.sum_x / double(b.count));
            ys.push_back(var);
        }
        if (xs.size() < 2)
            throw fit_error("estimate_hetero: slope unidentifiable, only " +
                            std::to_string(xs.size()) + " usable intensity bin(s)");

        double n = double(xs.size());
        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        for (size_t i = 0; i < xs.size(); ++i) {
            sx += xs[i];
            sy += ys[i];
            sxx += xs[i] * xs[i];
            sxy += xs[i] * ys[i];
        }
        double denom = sxx - sx * sx / n;
        if (!(denom > 1e-9))
            throw fit_error("estimate_hetero: degenerate intensity design (all bins at one intensity)");
        double slope = (sxy - sx * sy / n) / denom;
        double intercept = (sy - slope * sx) / n;
        if (slope < 0.0) {
            slope = 0.0;
            out.clamped[size_t(c)] = true;
        }
        if (intercept < 0.0) {
            intercept = 0.0;
            out.clamped[size_t(c)] = true;
        }
        out.beta_s_sq[size_t(c)] = slope;
        out.beta_c_sq[size_t(c)] = intercept;
    }
    return out;
}

StdIntensityCurve std_vs_intensity(const std::vector<ImagePair>& pairs, int n_bins) {
    require_noisy(pairs, "std_vs_intensity");
    if (n_bins <= 0) throw validation_error("std_vs_intensity: n_bins must be positive");

    double width = 256.0 / double(n_bins);
    StdIntensityCurve out;
    for (int64_t c = 0; c < 3; ++c) {
        std::vector<BinAcc> bins(static_cast<size_t>(n_bins));
        for (const auto& p : pairs) {
            int64_t hw = p.clean.dim(1) * p.clean.dim(2);
            const double* pc = p.clean.data() + c * hw;
            const double* pn = p.noisy->data() + c * hw;
            for (int64_t i = 0; i < hw; ++i) {
                int64_t b = int64_t(pc[i] / width);
                if (b < 0) b = 0;
                if (b >= n_bins) b = n_bins - 1;
                double noise = pn[i] - pc[i];
                auto& acc = bins[size_t(b)];
                ++acc.count;
                acc.sum += noise;
                acc.sumsq += noise * noise;
            }
        }
        auto& ch = out.channels[size_t(c)];
        ch.resize(size_t(n_bins));
        for (int64_t b = 0; b < n_bins; ++b) {
            auto& dst = ch[size_t(b)];
            const auto& acc = bins[size_t(b)];
            dst.intensity_center = (double(b) + 0.5) * width;
            dst.count = acc.count;
            dst.reliable = acc.count >= StdIntensityCurve::kMinSupport;
            if (acc.count >= 2) {
                double mean = acc.sum / double(acc.count);
                double var =
                    (acc.sumsq - double(acc.count) * mean * mean) / double(acc.count - 1);
                dst.stddev = var > 0.0 ? std::sqrt(var) : 0.0;
            }
        }
    }
    return out;
}

OffsetCorrelation correlation_at_offset(const std::vector<Tensor>& fields, int64_t dx,
                                        int64_t dy) {
    if (fields.empty()) throw insufficient_data("correlation_at_offset: no noise fields");
    if (dx == 0 && dy == 0)
        throw validation_error("correlation_at_offset: offset must be nonzero");

    OffsetCorrelation out;
    double r_sum = 0.0;
    for (int64_t c = 0; c < 3; ++c) {
        double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
        int64_t n = 0;
        for (const auto& f : fields) {
            if (f.rank() != 3 || f.dim(0) != 3)
                throw validation_error("correlation_at_offset: fields must be [3,H,W]");
            int64_t h = f.dim(1), w = f.dim(2);
            int64_t y0 = std::max<int64_t>(0, -dy), y1 = std::min(h, h - dy);
            int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min(w, w - dx);
            const double* p = f.data() + c * h * w;
            for (int64_t y = y0; y < y1; ++y)
                for (int64_t x = x0; x < x1; ++x) {
                    double a = p[y * w + x];
                    double b = p[(y + dy) * w + (x + dx)];
                    sa += a;
                    sb += b;
                    saa += a * a;
                    sbb += b * b;
                    sab += a * b;
                    ++n;
                }
        }
        if (n < 2) throw insufficient_data("correlation_at_offset: offset leaves no overlap");
        double va = saa - sa * sa / double(n);
        double vb = sbb - sb * sb / double(n);
        if (va <= 1e-12 || vb <= 1e-12) {
            out.degenerate = true;
            out.count = n;
            continue;
        }
        r_sum += (sab - sa * sb / double(n)) / std::sqrt(va * vb);
        out.count = n;
    }
    out.r = out.degenerate ? 0.0 : r_sum / 3.0;
    return out;
}

CorrelationProfile spatial_correlation(const std::vector<Tensor>& noise_fields,
                                       int64_t max_distance) {
    if (max_distance < 1)
        throw validation_error("spatial_correlation: max_distance must be >= 1");

    struct Agg {
        double weighted_r = 0.0;
        int64_t count = 0;
        bool degenerate = false;
    };
    std::map<int64_t, Agg> by_d2;  // key: dx^2 + dy^2

    int64_t d2max = max_distance * max_distance;
    for (int64_t dy = 0; dy <= max_distance; ++dy)
        for (int64_t dx = -max_distance; dx <= max_distance; ++dx) {
            if (dy == 0 && dx <= 0) continue;  // half-plane representative
            int64_t d2 = dx * dx + dy * dy;
            if (d2 < 1 || d2 > d2max) continue;
            OffsetCorrelation oc = correlation_at_offset(noise_fields, dx, dy);
            auto& agg = by_d2[d2];
            agg.weighted_r += oc.r * double(oc.count);
            agg.count += oc.count;
            agg.degenerate = agg.degenerate || oc.degenerate;
        }

    CorrelationProfile out;
    for (const auto& [d2, agg] : by_d2) {
        CorrelationPoint p;
        p.distance = std::sqrt(double(d2));
        p.r = agg.count > 0 ? agg.weighted_r / double(agg.count) : 0.0;
        p.count = agg.count;
        p.degenerate = agg.degenerate;
        out.points.push_back(p);
    }
    return out;
}

} // namespace nmfg
