#pragma once

#include "core/tensor.hpp"

namespace nmfg {

// Elementwise binary (shapes must match exactly).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);

// Elementwise unary.
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

// Reductions.
Tensor sum_all(const Tensor& a);             // -> [1]
Tensor mean_all(const Tensor& a);            // -> [1]
Tensor sum_per_sample(const Tensor& a);      // [N,...] -> [N]
Tensor sum_hw(const Tensor& a);              // [N,C,H,W] -> [N,C]
Tensor sum_c(const Tensor& a);               // [N,C,H,W] -> [N,1,H,W]
Tensor sum_nhw(const Tensor& a);             // [N,C,H,W] -> [C]
Tensor sum_rows(const Tensor& a);            // [N,C] -> [C]

// Broadcasts (adjoints of the reductions above).
Tensor bcast_all(const Tensor& s, const Shape& shape);          // [1] -> shape
Tensor bcast_sample(const Tensor& v, const Shape& shape);       // [N] -> [N,...]
Tensor bcast_nc(const Tensor& m, int64_t h, int64_t w);         // [N,C] -> [N,C,H,W]
Tensor bcast_c(const Tensor& v, int64_t n, int64_t h, int64_t w); // [C] -> [N,C,H,W]
Tensor bcast_c_map(const Tensor& m, int64_t c);                 // [N,1,H,W] -> [N,C,H,W]
Tensor bcast_row(const Tensor& v, int64_t n);                   // [C] -> [N,C]

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K]x[K,N] -> [M,N]
Tensor transpose2(const Tensor& a);               // [M,N] -> [N,M]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b); // [N,I],[O,I],[O] -> [N,O]

// Structure.
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_c(const Tensor& a, const Tensor& b);         // along dim 1
Tensor slice_c(const Tensor& a, int64_t c0, int64_t c1);   // [c0, c1)
Tensor swap01(const Tensor& a);                            // rank-4, swap dims 0/1
Tensor flip_hw(const Tensor& a);                           // rank-4
Tensor pad_zero(const Tensor& a, int64_t pt, int64_t pb, int64_t pl, int64_t pr);
Tensor crop_hw(const Tensor& a, int64_t top, int64_t left, int64_t h, int64_t w);
Tensor pad_reflect(const Tensor& a, int64_t pt, int64_t pb, int64_t pl, int64_t pr);

// Convolution and resampling. Stride is always 1; padding is zero-fill.
Tensor conv2d(const Tensor& x, const Tensor& w, int64_t ph, int64_t pw);
Tensor avgpool2(const Tensor& x);   // H, W must be even
Tensor upsample2(const Tensor& x);  // nearest neighbour, doubles H and W

Tensor detach(const Tensor& a);

} // namespace nmfg
