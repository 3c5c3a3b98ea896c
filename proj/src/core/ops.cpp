#include "core/ops.hpp"

#include <Eigen/Core>
#include <cmath>

#include "core/error.hpp"

namespace nmfg {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void check(bool cond, const char* msg) {
    if (!cond) throw validation_error(msg);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw validation_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                               " vs " + shape_str(b.shape()));
}

void check_rank4(const Tensor& a, const char* op) {
    if (a.rank() != 4)
        throw validation_error(std::string(op) + ": expected rank-4 tensor, got " +
                               shape_str(a.shape()));
}

template <typename F>
Tensor unary_masked(const Tensor& a, F f, std::vector<double> mask_vals, const char* op) {
    const double* src = a.data();
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = f(src[i]);
    Tensor mask = Tensor::from_data(a.shape(), std::move(mask_vals));
    return make_op_result(
        a.shape(), std::move(out), {a},
        [mask](const Tensor& g) -> std::vector<Tensor> { return {mul(g, mask)}; }, op);
}

Tensor embed_c(const Tensor& g, int64_t c0, int64_t c_total);
Tensor pad_reflect_adjoint(const Tensor& g, int64_t pt, int64_t pb, int64_t pl, int64_t pr,
                           int64_t src_h, int64_t src_w);

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    const double *pa = a.data(), *pb = b.data();
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = pa[i] + pb[i];
    return make_op_result(
        a.shape(), std::move(out), {a, b},
        [](const Tensor& g) -> std::vector<Tensor> { return {g, g}; }, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    const double *pa = a.data(), *pb = b.data();
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = pa[i] - pb[i];
    return make_op_result(
        a.shape(), std::move(out), {a, b},
        [](const Tensor& g) -> std::vector<Tensor> { return {g, neg(g)}; }, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    const double *pa = a.data(), *pb = b.data();
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = pa[i] * pb[i];
    return make_op_result(
        a.shape(), std::move(out), {a, b},
        [a, b](const Tensor& g) -> std::vector<Tensor> { return {mul(g, b), mul(g, a)}; },
        "mul");
}

Tensor divide(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "divide");
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    const double *pa = a.data(), *pb = b.data();
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = pa[i] / pb[i];
    return make_op_result(
        a.shape(), std::move(out), {a, b},
        [a, b](const Tensor& g) -> std::vector<Tensor> {
            return {divide(g, b), neg(divide(mul(g, a), mul(b, b)))};
        },
        "divide");
}

Tensor neg(const Tensor& a) {
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    const double* pa = a.data();
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = -pa[i];
    return make_op_result(
        a.shape(), std::move(out), {a},
        [](const Tensor& g) -> std::vector<Tensor> { return {neg(g)}; }, "neg");
}

Tensor exp(const Tensor& a) {
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    const double* pa = a.data();
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = std::exp(pa[i]);
    return make_op_result(
        a.shape(), std::move(out), {a},
        [a](const Tensor& g) -> std::vector<Tensor> { return {mul(g, exp(a))}; }, "exp");
}

Tensor log(const Tensor& a) {
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    const double* pa = a.data();
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = std::log(pa[i]);
    return make_op_result(
        a.shape(), std::move(out), {a},
        [a](const Tensor& g) -> std::vector<Tensor> { return {divide(g, a)}; }, "log");
}

Tensor tanh(const Tensor& a) {
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    const double* pa = a.data();
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = std::tanh(pa[i]);
    return make_op_result(
        a.shape(), std::move(out), {a},
        [a](const Tensor& g) -> std::vector<Tensor> {
            Tensor t = tanh(a);
            return {mul(g, add_scalar(neg(square(t)), 1.0))};
        },
        "tanh");
}

Tensor sqrt(const Tensor& a) {
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    const double* pa = a.data();
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = std::sqrt(pa[i]);
    return make_op_result(
        a.shape(), std::move(out), {a},
        [a](const Tensor& g) -> std::vector<Tensor> {
            return {divide(mul_scalar(g, 0.5), sqrt(a))};
        },
        "sqrt");
}

Tensor square(const Tensor& a) {
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    const double* pa = a.data();
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = pa[i] * pa[i];
    return make_op_result(
        a.shape(), std::move(out), {a},
        [a](const Tensor& g) -> std::vector<Tensor> { return {mul(g, mul_scalar(a, 2.0))}; },
        "square");
}

Tensor relu(const Tensor& a) {
    int64_t n = a.numel();
    std::vector<double> mask(static_cast<size_t>(n));
    const double* pa = a.data();
    for (int64_t i = 0; i < n; ++i) mask[size_t(i)] = pa[i] > 0.0 ? 1.0 : 0.0;
    return unary_masked(a, [](double v) { return v > 0.0 ? v : 0.0; }, std::move(mask), "relu");
}

Tensor leaky_relu(const Tensor& a, double slope) {
    int64_t n = a.numel();
    std::vector<double> mask(static_cast<size_t>(n));
    const double* pa = a.data();
    for (int64_t i = 0; i < n; ++i) mask[size_t(i)] = pa[i] > 0.0 ? 1.0 : slope;
    return unary_masked(
        a, [slope](double v) { return v > 0.0 ? v : slope * v; }, std::move(mask), "leaky_relu");
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    check(lo <= hi, "clamp: lo must not exceed hi");
    int64_t n = a.numel();
    std::vector<double> mask(static_cast<size_t>(n));
    const double* pa = a.data();
    for (int64_t i = 0; i < n; ++i)
        mask[size_t(i)] = (pa[i] >= lo && pa[i] <= hi) ? 1.0 : 0.0;
    return unary_masked(
        a, [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); }, std::move(mask),
        "clamp");
}

Tensor add_scalar(const Tensor& a, double c) {
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    const double* pa = a.data();
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = pa[i] + c;
    return make_op_result(
        a.shape(), std::move(out), {a},
        [](const Tensor& g) -> std::vector<Tensor> { return {g}; }, "add_scalar");
}

Tensor mul_scalar(const Tensor& a, double c) {
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    const double* pa = a.data();
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = pa[i] * c;
    return make_op_result(
        a.shape(), std::move(out), {a},
        [c](const Tensor& g) -> std::vector<Tensor> { return {mul_scalar(g, c)}; },
        "mul_scalar");
}

Tensor sum_all(const Tensor& a) {
    const double* pa = a.data();
    double s = 0.0;
    for (int64_t i = 0, n = a.numel(); i < n; ++i) s += pa[i];
    Shape src = a.shape();
    return make_op_result(
        {1}, {s}, {a},
        [src](const Tensor& g) -> std::vector<Tensor> { return {bcast_all(g, src)}; },
        "sum_all");
}

Tensor mean_all(const Tensor& a) {
    return mul_scalar(sum_all(a), 1.0 / double(a.numel()));
}

Tensor sum_per_sample(const Tensor& a) {
    check(a.rank() >= 1, "sum_per_sample: rank must be >= 1");
    int64_t n = a.dim(0);
    int64_t per = a.numel() / n;
    std::vector<double> out(size_t(n), 0.0);
    const double* pa = a.data();
    for (int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < per; ++j) s += pa[i * per + j];
        out[size_t(i)] = s;
    }
    Shape src = a.shape();
    return make_op_result(
        {n}, std::move(out), {a},
        [src](const Tensor& g) -> std::vector<Tensor> { return {bcast_sample(g, src)}; },
        "sum_per_sample");
}

Tensor sum_hw(const Tensor& a) {
    check_rank4(a, "sum_hw");
    int64_t n = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
    std::vector<double> out(size_t(n * c), 0.0);
    const double* pa = a.data();
    for (int64_t i = 0; i < n * c; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < hw; ++j) s += pa[i * hw + j];
        out[size_t(i)] = s;
    }
    int64_t h = a.dim(2), w = a.dim(3);
    return make_op_result(
        {n, c}, std::move(out), {a},
        [h, w](const Tensor& g) -> std::vector<Tensor> { return {bcast_nc(g, h, w)}; },
        "sum_hw");
}

Tensor sum_c(const Tensor& a) {
    check_rank4(a, "sum_c");
    int64_t n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
    int64_t hw = h * w;
    std::vector<double> out(size_t(n * hw), 0.0);
    const double* pa = a.data();
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t ci = 0; ci < c; ++ci) {
            const double* src = pa + (ni * c + ci) * hw;
            double* dst = out.data() + ni * hw;
            for (int64_t j = 0; j < hw; ++j) dst[j] += src[j];
        }
    int64_t cc = c;
    return make_op_result(
        {n, 1, h, w}, std::move(out), {a},
        [cc](const Tensor& g) -> std::vector<Tensor> { return {bcast_c_map(g, cc)}; },
        "sum_c");
}

Tensor sum_nhw(const Tensor& a) {
    check_rank4(a, "sum_nhw");
    int64_t n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
    int64_t hw = h * w;
    std::vector<double> out(size_t(c), 0.0);
    const double* pa = a.data();
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t ci = 0; ci < c; ++ci) {
            const double* src = pa + (ni * c + ci) * hw;
            double s = 0.0;
            for (int64_t j = 0; j < hw; ++j) s += src[j];
            out[size_t(ci)] += s;
        }
    return make_op_result(
        {c}, std::move(out), {a},
        [n, h, w](const Tensor& g) -> std::vector<Tensor> { return {bcast_c(g, n, h, w)}; },
        "sum_nhw");
}

Tensor sum_rows(const Tensor& a) {
    check(a.rank() == 2, "sum_rows: rank must be 2");
    int64_t n = a.dim(0), c = a.dim(1);
    std::vector<double> out(size_t(c), 0.0);
    const double* pa = a.data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) out[size_t(j)] += pa[i * c + j];
    return make_op_result(
        {c}, std::move(out), {a},
        [n](const Tensor& g) -> std::vector<Tensor> { return {bcast_row(g, n)}; },
        "sum_rows");
}

Tensor bcast_all(const Tensor& s, const Shape& shape) {
    check(s.numel() == 1, "bcast_all: source must be a scalar tensor");
    int64_t n = shape_numel(shape);
    std::vector<double> out(size_t(n), s.data()[0]);
    return make_op_result(
        shape, std::move(out), {s},
        [](const Tensor& g) -> std::vector<Tensor> { return {sum_all(g)}; }, "bcast_all");
}

Tensor bcast_sample(const Tensor& v, const Shape& shape) {
    check(v.rank() == 1, "bcast_sample: source must be rank-1");
    check(!shape.empty() && shape[0] == v.dim(0), "bcast_sample: leading dim mismatch");
    int64_t n = v.dim(0);
    int64_t per = shape_numel(shape) / n;
    std::vector<double> out(size_t(n * per));
    const double* pv = v.data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < per; ++j) out[size_t(i * per + j)] = pv[i];
    return make_op_result(
        shape, std::move(out), {v},
        [](const Tensor& g) -> std::vector<Tensor> { return {sum_per_sample(g)}; },
        "bcast_sample");
}

Tensor bcast_nc(const Tensor& m, int64_t h, int64_t w) {
    check(m.rank() == 2, "bcast_nc: source must be rank-2");
    int64_t n = m.dim(0), c = m.dim(1), hw = h * w;
    std::vector<double> out(size_t(n * c * hw));
    const double* pm = m.data();
    for (int64_t i = 0; i < n * c; ++i)
        for (int64_t j = 0; j < hw; ++j) out[size_t(i * hw + j)] = pm[i];
    return make_op_result(
        {n, c, h, w}, std::move(out), {m},
        [](const Tensor& g) -> std::vector<Tensor> { return {sum_hw(g)}; }, "bcast_nc");
}

Tensor bcast_c(const Tensor& v, int64_t n, int64_t h, int64_t w) {
    check(v.rank() == 1, "bcast_c: source must be rank-1");
    int64_t c = v.dim(0), hw = h * w;
    std::vector<double> out(size_t(n * c * hw));
    const double* pv = v.data();
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t j = 0; j < hw; ++j)
                out[size_t((ni * c + ci) * hw + j)] = pv[ci];
    return make_op_result(
        {n, c, h, w}, std::move(out), {v},
        [](const Tensor& g) -> std::vector<Tensor> { return {sum_nhw(g)}; }, "bcast_c");
}

Tensor bcast_c_map(const Tensor& m, int64_t c) {
    check_rank4(m, "bcast_c_map");
    check(m.dim(1) == 1, "bcast_c_map: source channel dim must be 1");
    int64_t n = m.dim(0), h = m.dim(2), w = m.dim(3), hw = h * w;
    std::vector<double> out(size_t(n * c * hw));
    const double* pm = m.data();
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t j = 0; j < hw; ++j)
                out[size_t((ni * c + ci) * hw + j)] = pm[ni * hw + j];
    return make_op_result(
        {n, c, h, w}, std::move(out), {m},
        [](const Tensor& g) -> std::vector<Tensor> { return {sum_c(g)}; }, "bcast_c_map");
}

Tensor bcast_row(const Tensor& v, int64_t n) {
    check(v.rank() == 1, "bcast_row: source must be rank-1");
    int64_t c = v.dim(0);
    std::vector<double> out(size_t(n * c));
    const double* pv = v.data();
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) out[size_t(i * c + j)] = pv[j];
    return make_op_result(
        {n, c}, std::move(out), {v},
        [](const Tensor& g) -> std::vector<Tensor> { return {sum_rows(g)}; }, "bcast_row");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2 && b.rank() == 2, "matmul: both operands must be rank-2");
    check(a.dim(1) == b.dim(0), "matmul: inner dimensions disagree");
    int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(size_t(m * n));
    {
        CMapMat ma(a.data(), m, k), mb(b.data(), k, n);
        MapMat mo(out.data(), m, n);
        mo.noalias() = ma * mb;
    }
    return make_op_result(
        {m, n}, std::move(out), {a, b},
        [a, b](const Tensor& g) -> std::vector<Tensor> {
            return {matmul(g, transpose2(b)), matmul(transpose2(a), g)};
        },
        "matmul");
}

Tensor transpose2(const Tensor& a) {
    check(a.rank() == 2, "transpose2: operand must be rank-2");
    int64_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(size_t(m * n));
    const double* pa = a.data();
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) out[size_t(j * m + i)] = pa[i * n + j];
    return make_op_result(
        {n, m}, std::move(out), {a},
        [](const Tensor& g) -> std::vector<Tensor> { return {transpose2(g)}; }, "transpose2");
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    check(x.rank() == 2 && w.rank() == 2 && b.rank() == 1, "linear: bad operand ranks");
    check(x.dim(1) == w.dim(1) && w.dim(0) == b.dim(0), "linear: dimension mismatch");
    return add(matmul(x, transpose2(w)), bcast_row(b, x.dim(0)));
}

Tensor reshape(const Tensor& a, Shape shape) {
    check(shape_numel(shape) == a.numel(), "reshape: element count mismatch");
    std::vector<double> out(*a.node()->values);
    Shape src = a.shape();
    return make_op_result(
        std::move(shape), std::move(out), {a},
        [src](const Tensor& g) -> std::vector<Tensor> { return {reshape(g, src)}; },
        "reshape");
}

Tensor concat_c(const Tensor& a, const Tensor& b) {
    check_rank4(a, "concat_c");
    check_rank4(b, "concat_c");
    check(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_c: non-channel dims must match");
    int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
    std::vector<double> out(size_t(n * (ca + cb) * hw));
    const double *pa = a.data(), *pb = b.data();
    for (int64_t ni = 0; ni < n; ++ni) {
        double* dst = out.data() + ni * (ca + cb) * hw;
        std::copy(pa + ni * ca * hw, pa + (ni + 1) * ca * hw, dst);
        std::copy(pb + ni * cb * hw, pb + (ni + 1) * cb * hw, dst + ca * hw);
    }
    return make_op_result(
        {n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {a, b},
        [ca, cb](const Tensor& g) -> std::vector<Tensor> {
            return {slice_c(g, 0, ca), slice_c(g, ca, ca + cb)};
        },
        "concat_c");
}

namespace {
Tensor embed_c(const Tensor& g, int64_t c0, int64_t c_total) {
    check_rank4(g, "embed_c");
    int64_t n = g.dim(0), c = g.dim(1), h = g.dim(2), w = g.dim(3), hw = h * w;
    std::vector<double> out(size_t(n * c_total * hw), 0.0);
    const double* pg = g.data();
    for (int64_t ni = 0; ni < n; ++ni)
        std::copy(pg + ni * c * hw, pg + (ni + 1) * c * hw,
                  out.data() + (ni * c_total + c0) * hw);
    int64_t c1 = c0 + c;
    return make_op_result(
        {n, c_total, h, w}, std::move(out), {g},
        [c0, c1](const Tensor& gg) -> std::vector<Tensor> { return {slice_c(gg, c0, c1)}; },
        "embed_c");
}
} // namespace

Tensor slice_c(const Tensor& a, int64_t c0, int64_t c1) {
    check_rank4(a, "slice_c");
    check(0 <= c0 && c0 < c1 && c1 <= a.dim(1), "slice_c: channel range out of bounds");
    int64_t n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3), hw = h * w;
    int64_t cs = c1 - c0;
    std::vector<double> out(size_t(n * cs * hw));
    const double* pa = a.data();
    for (int64_t ni = 0; ni < n; ++ni)
        std::copy(pa + (ni * c + c0) * hw, pa + (ni * c + c1) * hw, out.data() + ni * cs * hw);
    int64_t c_total = c;
    return make_op_result(
        {n, cs, h, w}, std::move(out), {a},
        [c0, c_total](const Tensor& g) -> std::vector<Tensor> {
            return {embed_c(g, c0, c_total)};
        },
        "slice_c");
}

Tensor swap01(const Tensor& a) {
    check_rank4(a, "swap01");
    int64_t d0 = a.dim(0), d1 = a.dim(1), hw = a.dim(2) * a.dim(3);
    std::vector<double> out(size_t(d0 * d1 * hw));
    const double* pa = a.data();
    for (int64_t i = 0; i < d0; ++i)
        for (int64_t j = 0; j < d1; ++j)
            std::copy(pa + (i * d1 + j) * hw, pa + (i * d1 + j + 1) * hw,
                      out.data() + (j * d0 + i) * hw);
    return make_op_result(
        {d1, d0, a.dim(2), a.dim(3)}, std::move(out), {a},
        [](const Tensor& g) -> std::vector<Tensor> { return {swap01(g)}; }, "swap01");
}

Tensor flip_hw(const Tensor& a) {
    check_rank4(a, "flip_hw");
    int64_t nc = a.dim(0) * a.dim(1), h = a.dim(2), w = a.dim(3);
    std::vector<double> out(size_t(nc * h * w));
    const double* pa = a.data();
    for (int64_t i = 0; i < nc; ++i)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                out[size_t((i * h + h - 1 - y) * w + w - 1 - x)] = pa[(i * h + y) * w + x];
    return make_op_result(
        a.shape(), std::move(out), {a},
        [](const Tensor& g) -> std::vector<Tensor> { return {flip_hw(g)}; }, "flip_hw");
}

Tensor pad_zero(const Tensor& a, int64_t pt, int64_t pb, int64_t pl, int64_t pr) {
    check_rank4(a, "pad_zero");
    check(pt >= 0 && pb >= 0 && pl >= 0 && pr >= 0, "pad_zero: negative padding");
    int64_t nc = a.dim(0) * a.dim(1), h = a.dim(2), w = a.dim(3);
    int64_t ho = h + pt + pb, wo = w + pl + pr;
    std::vector<double> out(size_t(nc * ho * wo), 0.0);
    const double* pa = a.data();
    for (int64_t i = 0; i < nc; ++i)
        for (int64_t y = 0; y < h; ++y)
            std::copy(pa + (i * h + y) * w, pa + (i * h + y + 1) * w,
                      out.data() + (i * ho + y + pt) * wo + pl);
    int64_t sh = h, sw = w;
    return make_op_result(
        {a.dim(0), a.dim(1), ho, wo}, std::move(out), {a},
        [pt, pl, sh, sw](const Tensor& g) -> std::vector<Tensor> {
            return {crop_hw(g, pt, pl, sh, sw)};
        },
        "pad_zero");
}

Tensor crop_hw(const Tensor& a, int64_t top, int64_t left, int64_t h, int64_t w) {
    check_rank4(a, "crop_hw");
    check(top >= 0 && left >= 0 && h > 0 && w > 0 && top + h <= a.dim(2) &&
              left + w <= a.dim(3),
          "crop_hw: window out of bounds");
    int64_t nc = a.dim(0) * a.dim(1), hi = a.dim(2), wi = a.dim(3);
    std::vector<double> out(size_t(nc * h * w));
    const double* pa = a.data();
    for (int64_t i = 0; i < nc; ++i)
        for (int64_t y = 0; y < h; ++y)
            std::copy(pa + (i * hi + top + y) * wi + left,
                      pa + (i * hi + top + y) * wi + left + w, out.data() + (i * h + y) * w);
    int64_t pb = hi - top - h, pr = wi - left - w;
    return make_op_result(
        {a.dim(0), a.dim(1), h, w}, std::move(out), {a},
        [top, pb, left, pr](const Tensor& g) -> std::vector<Tensor> {
            return {pad_zero(g, top, pb, left, pr)};
        },
        "crop_hw");
}

namespace {

int64_t reflect_index(int64_t j, int64_t n) {
    if (j < 0) return -j;
    if (j >= n) return 2 * (n - 1) - j;
    return j;
}

Tensor pad_reflect_adjoint(const Tensor& g, int64_t pt, int64_t pb, int64_t pl, int64_t pr,
                           int64_t src_h, int64_t src_w) {
    check_rank4(g, "pad_reflect_adjoint");
    int64_t nc = g.dim(0) * g.dim(1), ho = g.dim(2), wo = g.dim(3);
    std::vector<double> out(size_t(nc * src_h * src_w), 0.0);
    const double* pg = g.data();
    for (int64_t i = 0; i < nc; ++i)
        for (int64_t y = 0; y < ho; ++y) {
            int64_t sy = reflect_index(y - pt, src_h);
            for (int64_t x = 0; x < wo; ++x) {
                int64_t sx = reflect_index(x - pl, src_w);
                out[size_t((i * src_h + sy) * src_w + sx)] += pg[(i * ho + y) * wo + x];
            }
        }
    return make_op_result(
        {g.dim(0), g.dim(1), src_h, src_w}, std::move(out), {g},
        [pt, pb, pl, pr](const Tensor& gg) -> std::vector<Tensor> {
            return {pad_reflect(gg, pt, pb, pl, pr)};
        },
        "pad_reflect_adjoint");
}

} // namespace

Tensor pad_reflect(const Tensor& a, int64_t pt, int64_t pb, int64_t pl, int64_t pr) {
    check_rank4(a, "pad_reflect");
    int64_t h = a.dim(2), w = a.dim(3);
    check(pt >= 0 && pb >= 0 && pl >= 0 && pr >= 0, "pad_reflect: negative padding");
    check(pt < h && pb < h && pl < w && pr < w, "pad_reflect: padding must be below size");
    int64_t nc = a.dim(0) * a.dim(1), ho = h + pt + pb, wo = w + pl + pr;
    std::vector<double> out(size_t(nc * ho * wo));
    const double* pa = a.data();
    for (int64_t i = 0; i < nc; ++i)
        for (int64_t y = 0; y < ho; ++y) {
            int64_t sy = reflect_index(y - pt, h);
            for (int64_t x = 0; x < wo; ++x) {
                int64_t sx = reflect_index(x - pl, w);
                out[size_t((i * ho + y) * wo + x)] = pa[(i * h + sy) * w + sx];
            }
        }
    int64_t sh = h, sw = w;
    return make_op_result(
        {a.dim(0), a.dim(1), ho, wo}, std::move(out), {a},
        [pt, pb, pl, pr, sh, sw](const Tensor& g) -> std::vector<Tensor> {
            return {pad_reflect_adjoint(g, pt, pb, pl, pr, sh, sw)};
        },
        "pad_reflect");
}

Tensor conv2d(const Tensor& x, const Tensor& w, int64_t ph, int64_t pw) {
    check_rank4(x, "conv2d input");
    check_rank4(w, "conv2d weight");
    check(x.dim(1) == w.dim(1), "conv2d: channel mismatch between input and weight");
    int64_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
    int64_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    check(ph >= 0 && pw >= 0 && ph <= kh - 1 && pw <= kw - 1,
          "conv2d: padding must lie in [0, kernel-1]");
    int64_t ho = h + 2 * ph - kh + 1, wo = wd + 2 * pw - kw + 1;
    check(ho >= 1 && wo >= 1, "conv2d: kernel larger than padded input");

    int64_t k = ci * kh * kw;
    int64_t rows = n * ho * wo;
    std::vector<double> cols(size_t(rows * k));
    const double* px = x.data();
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t oy = 0; oy < ho; ++oy)
            for (int64_t ox = 0; ox < wo; ++ox) {
                double* dst = cols.data() + ((ni * ho + oy) * wo + ox) * k;
                for (int64_t c = 0; c < ci; ++c) {
                    const double* plane = px + (ni * ci + c) * h * wd;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        int64_t iy = oy + ky - ph;
                        double* drow = dst + (c * kh + ky) * kw;
                        if (iy < 0 || iy >= h) {
                            std::fill(drow, drow + kw, 0.0);
                            continue;
                        }
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            int64_t ix = ox + kx - pw;
                            drow[kx] = (ix < 0 || ix >= wd) ? 0.0 : plane[iy * wd + ix];
                        }
                    }
                }
            }

    std::vector<double> prod(size_t(rows * co));
    {
        CMapMat ma(cols.data(), rows, k), mw(w.data(), co, k);
        MapMat mo(prod.data(), rows, co);
        mo.noalias() = ma * mw.transpose();
    }
    std::vector<double> out(size_t(n * co * ho * wo));
    for (int64_t ni = 0; ni < n; ++ni)
        for (int64_t oy = 0; oy < ho; ++oy)
            for (int64_t ox = 0; ox < wo; ++ox) {
                const double* src = prod.data() + ((ni * ho + oy) * wo + ox) * co;
                for (int64_t c = 0; c < co; ++c)
                    out[size_t(((ni * co + c) * ho + oy) * wo + ox)] = src[c];
            }

    return make_op_result(
        {n, co, ho, wo}, std::move(out), {x, w},
        [x, w, ph, pw, kh, kw](const Tensor& g) -> std::vector<Tensor> {
            Tensor dx = conv2d(g, flip_hw(swap01(w)), kh - 1 - ph, kw - 1 - pw);
            Tensor dw = swap01(conv2d(swap01(x), swap01(g), ph, pw));
            return {dx, dw};
        },
        "conv2d");
}

Tensor avgpool2(const Tensor& x) {
    check_rank4(x, "avgpool2");
    int64_t h = x.dim(2), w = x.dim(3);
    check(h % 2 == 0 && w % 2 == 0, "avgpool2: spatial dims must be even");
    int64_t nc = x.dim(0) * x.dim(1), ho = h / 2, wo = w / 2;
    std::vector<double> out(size_t(nc * ho * wo));
    const double* px = x.data();
    for (int64_t i = 0; i < nc; ++i)
        for (int64_t y = 0; y < ho; ++y)
            for (int64_t xx = 0; xx < wo; ++xx) {
                const double* p = px + (i * h + 2 * y) * w + 2 * xx;
                out[size_t((i * ho + y) * wo + xx)] =
                    0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
            }
    return make_op_result(
        {x.dim(0), x.dim(1), ho, wo}, std::move(out), {x},
        [](const Tensor& g) -> std::vector<Tensor> {
            return {mul_scalar(upsample2(g), 0.25)};
        },
        "avgpool2");
}

Tensor upsample2(const Tensor& x) {
    check_rank4(x, "upsample2");
    int64_t h = x.dim(2), w = x.dim(3);
    int64_t nc = x.dim(0) * x.dim(1), ho = h * 2, wo = w * 2;
    std::vector<double> out(size_t(nc * ho * wo));
    const double* px = x.data();
    for (int64_t i = 0; i < nc; ++i)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) {
                double v = px[(i * h + y) * w + xx];
                double* d = out.data() + (i * ho + 2 * y) * wo + 2 * xx;
                d[0] = v;
                d[1] = v;
                d[wo] = v;
                d[wo + 1] = v;
            }
    return make_op_result(
        {x.dim(0), x.dim(1), ho, wo}, std::move(out), {x},
        [](const Tensor& g) -> std::vector<Tensor> {
            return {mul_scalar(avgpool2(g), 4.0)};
        },
        "upsample2");
}

Tensor detach(const Tensor& a) { return a.detach(); }

} // namespace nmfg
