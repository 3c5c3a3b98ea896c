#pragma once

#include <vector>

#include "core/rng.hpp"
#include "data/manifest.hpp"

namespace nmfg {

struct PatchCoord {
    int64_t top = 0, left = 0;
};

// Regular grid plus, when stride does not divide the remainder, one extra
// row/column of patches anchored at the far border so the union of patches
// always covers the whole image.
std::vector<PatchCoord> patch_grid(int64_t h, int64_t w, int64_t size, int64_t stride);

ImagePair extract_patch(const ImagePair& pair, PatchCoord at, int64_t size);
std::vector<ImagePair> extract_patches(const ImagePair& pair, int64_t size = 96,
                                       int64_t stride = 48);

// k in [0,8): horizontal mirror when k >= 4, then k%4 quarter-turns.
Tensor dihedral_tensor(const Tensor& t, int k);
ImagePair apply_dihedral(const ImagePair& patch, int k);
ImagePair augment(const ImagePair& patch, Rng& rng);

} // namespace nmfg
