#pragma once

#include <array>
#include <vector>

#include "data/manifest.hpp"

namespace nmfg {

struct HeteroParams {
    std::array<double, 3> beta_s_sq{0.0, 0.0, 0.0};
    std::array<double, 3> beta_c_sq{0.0, 0.0, 0.0};
    std::array<bool, 3> clamped{false, false, false};  // negative fit clamped to 0
};

// Per channel: bin pixels by clean intensity (width 8), take the sample
// variance of the noise in each bin, then least-squares fit
// variance = beta_s_sq * intensity + beta_c_sq over bins holding >= 100
// pixels. Requires >= 10^4 pixels per channel.
HeteroParams estimate_hetero(const std::vector<ImagePair>& pairs);

struct StdIntensityBin {
    double intensity_center = 0.0;
    double stddev = 0.0;
    int64_t count = 0;
    bool reliable = false;
};

struct StdIntensityCurve {
    std::array<std::vector<StdIntensityBin>, 3> channels;
    static constexpr int64_t kMinSupport = 100;
};

StdIntensityCurve std_vs_intensity(const std::vector<ImagePair>& pairs, int n_bins);

struct OffsetCorrelation {
    double r = 0.0;
    int64_t count = 0;      // pixel pairs per channel
    bool degenerate = false;  // a zero-variance marginal was hit
};

// Pearson correlation between a noise field and its copy shifted by
// (dx, dy), over the valid overlap region, pooled across fields, channels
// averaged.
OffsetCorrelation correlation_at_offset(const std::vector<Tensor>& fields, int64_t dx,
                                        int64_t dy);

struct CorrelationPoint {
    double distance = 0.0;
    double r = 0.0;
    int64_t count = 0;
    bool degenerate = false;
};

struct CorrelationProfile {
    std::vector<CorrelationPoint> points;  // sorted by distance ascending
};

// All integer offsets with 1 <= dx^2+dy^2 <= max_distance^2, one half-plane
// representative per symmetric pair (the mirrored offset has identical r by
// construction); offsets at equal Euclidean distance are averaged weighted by
// pair count.
CorrelationProfile spatial_correlation(const std::vector<Tensor>& noise_fields,
                                       int64_t max_distance);

} // namespace nmfg
