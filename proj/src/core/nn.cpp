#include "core/nn.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "core/error.hpp"

namespace nmfg {

void ParamStore::add(const std::string& name, const Tensor& t) {
    if (!t.defined() || !t.requires_grad())
        throw validation_error("ParamStore: tensor for '" + name + "' is not a parameter leaf");
    if (find(name)) throw validation_error("ParamStore: duplicate parameter name '" + name + "'");
    items_.emplace_back(name, t);
}

const Tensor* ParamStore::find(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return &t;
    return nullptr;
}

std::vector<Tensor> ParamStore::tensors() const {
    std::vector<Tensor> out;
    out.reserve(items_.size());
    for (const auto& [n, t] : items_) out.push_back(t);
    return out;
}

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
}

Tensor init_weight(Shape shape, int64_t fan_in, double scale, Rng& rng) {
    int64_t n = shape_numel(shape);
    std::vector<double> vals(size_t(n), 0.0);
    if (scale != 0.0) {
        double std = scale / std::sqrt(double(fan_in));
        for (auto& v : vals) v = rng.normal(0.0, std);
    }
    return Tensor::param(std::move(shape), std::move(vals));
}

Conv2d::Conv2d(int64_t cin, int64_t cout, int64_t k, int64_t pad_, double init_scale, Rng& rng)
    : pad(pad_) {
    w = init_weight({cout, cin, k, k}, cin * k * k, init_scale, rng);
    b = Tensor::param({cout}, std::vector<double>(size_t(cout), 0.0));
}

Tensor Conv2d::operator()(const Tensor& x) const {
    Tensor y = conv2d(x, w, pad, pad);
    return add(y, bcast_c(b, y.dim(0), y.dim(2), y.dim(3)));
}

void Conv2d::collect(const std::string& prefix, ParamStore& out) const {
    out.add(prefix + ".w", w);
    out.add(prefix + ".b", b);
}

Dense::Dense(int64_t in, int64_t out_, double init_scale, Rng& rng) {
    w = init_weight({out_, in}, in, init_scale, rng);
    b = Tensor::param({out_}, std::vector<double>(size_t(out_), 0.0));
}

Tensor Dense::operator()(const Tensor& x) const { return linear(x, w, b); }

void Dense::collect(const std::string& prefix, ParamStore& out) const {
    out.add(prefix + ".w", w);
    out.add(prefix + ".b", b);
}

Tensor pixel_norm(const Tensor& x, double eps) {
    int64_t c = x.dim(1);
    Tensor mean = mul_scalar(sum_c(x), 1.0 / double(c));
    Tensor centered = sub(x, bcast_c_map(mean, c));
    Tensor var = mul_scalar(sum_c(square(centered)), 1.0 / double(c));
    Tensor denom = sqrt(add_scalar(var, eps));
    return divide(centered, bcast_c_map(denom, c));
}

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParamStore& params, const std::vector<Tensor>& grads, double lr) {
    if (grads.size() != params.size())
        throw validation_error("Adam: gradient count does not match parameter count");
    if (slots_.empty()) {
        slots_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            size_t n = size_t(params.tensor(i).numel());
            slots_[i].m.assign(n, 0.0);
            slots_[i].v.assign(n, 0.0);
        }
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, double(t_));
    double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (size_t i = 0; i < params.size(); ++i) {
        if (!grads[i].defined()) continue;
        Tensor& p = params.tensor(i);
        if (grads[i].shape() != p.shape())
            throw validation_error("Adam: gradient shape mismatch for " + params.name(i));
        double* pd = p.data();
        const double* gd = grads[i].data();
        auto& m = slots_[i].m;
        auto& v = slots_[i].v;
        for (size_t j = 0; j < m.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * gd[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * gd[j] * gd[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            pd[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::save(std::ostream& out) const {
    uint64_t n = slots_.size();
    out.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    for (const auto& s : slots_) {
        uint64_t len = s.m.size();
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(reinterpret_cast<const char*>(s.m.data()), std::streamsize(len * 8));
        out.write(reinterpret_cast<const char*>(s.v.data()), std::streamsize(len * 8));
    }
}

void Adam::load(std::istream& in, const ParamStore& params) {
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&t_), sizeof(t_));
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in || n != params.size()) throw format_error("optimizer state does not match model");
    slots_.assign(n, {});
    for (size_t i = 0; i < n; ++i) {
        uint64_t len = 0;
        in.read(reinterpret_cast<char*>(&len), sizeof(len));
        if (!in || int64_t(len) != params.tensor(i).numel())
            throw format_error("optimizer slot size mismatch for " + params.name(i));
        slots_[i].m.resize(len);
        slots_[i].v.resize(len);
        in.read(reinterpret_cast<char*>(slots_[i].m.data()), std::streamsize(len * 8));
        in.read(reinterpret_cast<char*>(slots_[i].v.data()), std::streamsize(len * 8));
    }
    if (!in) throw format_error("truncated optimizer state");
}

} // namespace nmfg
