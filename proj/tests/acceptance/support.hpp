#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "analysis/statistics.hpp"
#include "core/error.hpp"
#include "core/nn.hpp"
#include "core/ops.hpp"
#include "data/oracle.hpp"
#include "eval/denoiser.hpp"
#include "eval/metrics.hpp"
#include "gan/gan.hpp"
#include "train/train.hpp"

namespace acceptance {

using namespace nmfg;

// Criterion functions return "" on success and a human-readable diagnosis of
// the first violated check otherwise.
template <typename... Parts>
std::string fail(Parts&&... parts) {
    std::ostringstream os;
    os.precision(10);
    (os << ... << parts);
    std::string s = os.str();
    return s.empty() ? std::string("failed") : s;
}

inline std::filesystem::path scratch_root() {
    static std::filesystem::path root = [] {
        auto p = std::filesystem::temp_directory_path() / "nmfg_acceptance";
        std::filesystem::create_directories(p);
        return p;
    }();
    return root;
}

inline std::string fresh_dir(const std::string& name) {
    auto p = scratch_root() / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

inline ConditionRegistry two_condition_registry() {
    ConditionRegistry reg;
    reg.cameras = {"CAM_A", "CAM_B"};
    reg.isos = {100, 800};
    return reg;
}

inline std::vector<CameraCondition> conds_of(size_t n, const CameraCondition& c) {
    return std::vector<CameraCondition>(n, c);
}

inline FlowStackConfig single_kind_config(FlowLayerKind kind) {
    FlowStackConfig cfg;
    cfg.embed_dim = 8;
    cfg.hidden_width = 12;
    cfg.encoder_blocks = 1;
    cfg.repeats = 1;
    cfg.enable_condlin = kind == FlowLayerKind::CondLin;
    cfg.enable_sdl = kind == FlowLayerKind::Sdl;
    cfg.enable_sal = kind == FlowLayerKind::Sal;
    return cfg;
}

inline void randomize_params(ParamStore& ps, Rng& rng, double scale) {
    for (size_t i = 0; i < ps.size(); ++i) {
        Tensor& t = ps.tensor(i);
        double* p = t.data();
        for (int64_t j = 0; j < t.numel(); ++j) p[j] = rng.normal() * scale;
    }
}

inline Tensor random_clean(Rng& rng, Shape shape) {
    std::vector<double> v(size_t(shape_numel(shape)));
    for (auto& x : v) x = double(rng.uniform_int(256));
    return Tensor::from_data(std::move(shape), std::move(v));
}

inline Tensor random_noise(Rng& rng, Shape shape, double scale) {
    std::vector<double> v(size_t(shape_numel(shape)));
    for (auto& x : v) x = rng.normal() * scale;
    return Tensor::from_data(std::move(shape), std::move(v));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
    const double* pa = a.data();
    const double* pb = b.data();
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(pa[i] - pb[i]));
    return m;
}

// Bitwise comparison used by the stop-gradient criterion: any drift at all is
// a failure, so no tolerance.
inline std::string compare_params_bitwise(const ParamStore& a, const ParamStore& b) {
    if (a.size() != b.size()) return fail("param count ", a.size(), " vs ", b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        if (a.name(i) != b.name(i)) return fail("param name ", a.name(i), " vs ", b.name(i));
        const Tensor& ta = a.tensor(i);
        const Tensor& tb = b.tensor(i);
        if (ta.shape() != tb.shape())
            return fail("shape mismatch at ", a.name(i));
        const double* pa = ta.data();
        const double* pb = tb.data();
        for (int64_t j = 0; j < ta.numel(); ++j)
            if (pa[j] != pb[j])
                return fail(a.name(i), "[", j, "]: ", pa[j], " vs ", pb[j]);
    }
    return "";
}

// Numeric rows of a TSV log, header skipped.
inline std::vector<std::vector<double>> read_log_rows(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            first = false;
            continue;
        }
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<double> row;
        std::string cell;
        while (std::getline(ls, cell, '\t')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

// Evenly spaced blocky intensity levels chosen so that +-4 sigma of the
// strongest oracle noise stays inside [0, 255]: clipping would bias the
// measured std-vs-intensity curves that the recovery criteria compare against
// closed forms.
inline std::vector<double> level_grid(double lo, double hi, int n) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i)
        v.push_back(std::round(lo + (hi - lo) * (n == 1 ? 0.0 : double(i) / (n - 1))));
    return v;
}

inline std::vector<ImagePair> pairs_of(const Manifest& m) {
    std::vector<ImagePair> out;
    for (const auto& e : m.entries) out.push_back(load_pair(m, e));
    return out;
}

// One function per acceptance criterion; "" means the criterion holds.
std::string criterion_1();
std::string criterion_2();
std::string criterion_3();
std::string criterion_4();
std::string criterion_5();
std::string criterion_6();
std::string criterion_7();
std::string criterion_8();
std::string criterion_9();
std::string criterion_10();
std::string criterion_11();
std::string criterion_12();

} // namespace acceptance
