#pragma once

#include <string>
#include <utility>
#include <vector>

#include "core/ops.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace nmfg {

// Ordered, named registry of trainable tensors. Order is the registration
// order, which makes optimizer state and checkpoint layout deterministic.
class ParamStore {
public:
    void add(const std::string& name, const Tensor& t);
    size_t size() const { return items_.size(); }
    const std::string& name(size_t i) const { return items_[i].first; }
    const Tensor& tensor(size_t i) const { return items_[i].second; }
    Tensor& tensor(size_t i) { return items_[i].second; }
    const Tensor* find(const std::string& name) const;
    std::vector<Tensor> tensors() const;
    int64_t total_elements() const;

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

// Weight init: normal with std = scale / sqrt(fan_in); scale 0 gives exact
// zeros, used for the output sublayer of every factor network so the model
// starts at the identity map.
Tensor init_weight(Shape shape, int64_t fan_in, double scale, Rng& rng);

struct Conv2d {
    Tensor w, b;
    int64_t pad = 0;

    Conv2d() = default;
    Conv2d(int64_t cin, int64_t cout, int64_t k, int64_t pad, double init_scale, Rng& rng);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamStore& out) const;
};

struct Dense {
    Tensor w, b;

    Dense() = default;
    Dense(int64_t in, int64_t out, double init_scale, Rng& rng);
    Tensor operator()(const Tensor& x) const;
    void collect(const std::string& prefix, ParamStore& out) const;
};

// Per-pixel feature normalization: each spatial position is normalized across
// its channel vector. Keeps every output strictly local to its own pixel,
// unlike spatial normalizations that would leak neighbouring statistics.
Tensor pixel_norm(const Tensor& x, double eps = 1e-5);

class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    // params and grads must be aligned; undefined grads are skipped.
    void step(ParamStore& params, const std::vector<Tensor>& grads, double lr);
    int64_t steps_taken() const { return t_; }

    void save(std::ostream& out) const;
    void load(std::istream& in, const ParamStore& params);

private:
    struct Slot {
        std::vector<double> m, v;
    };
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<Slot> slots_;
};

} // namespace nmfg
