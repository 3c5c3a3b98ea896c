#include "data/patches.hpp"

#include "core/error.hpp"

namespace nmfg {

static std::vector<int64_t> axis_anchors(int64_t extent, int64_t size, int64_t stride) {
    std::vector<int64_t> anchors;
    for (int64_t a = 0; a + size <= extent; a += stride) anchors.push_back(a);
    if (anchors.back() + size < extent) anchors.push_back(extent - size);
    return anchors;
}

std::vector<PatchCoord> patch_grid(int64_t h, int64_t w, int64_t size, int64_t stride) {
    if (size <= 0 || stride <= 0) throw validation_error("patch size and stride must be positive");
    if (h < size || w < size)
        throw validation_error("image " + std::to_string(h) + "x" + std::to_string(w) +
                               " is smaller than patch size " + std::to_string(size));
    auto tops = axis_anchors(h, size, stride);
    auto lefts = axis_anchors(w, size, stride);
    std::vector<PatchCoord> out;
    out.reserve(tops.size() * lefts.size());
    for (int64_t t : tops)
        for (int64_t l : lefts) out.push_back({t, l});
    return out;
}

static Tensor crop3(const Tensor& t, int64_t top, int64_t left, int64_t size) {
    int64_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    std::vector<double> v(size_t(c * size * size));
    const double* p = t.data();
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < size; ++y)
            for (int64_t x = 0; x < size; ++x)
                v[size_t((ci * size + y) * size + x)] =
                    p[(ci * h + top + y) * w + left + x];
    return Tensor::from_data({c, size, size}, std::move(v));
}

ImagePair extract_patch(const ImagePair& pair, PatchCoord at, int64_t size) {
    if (at.top < 0 || at.left < 0 || at.top + size > pair.clean.dim(1) ||
        at.left + size > pair.clean.dim(2))
        throw validation_error("patch window out of bounds");
    ImagePair out;
    out.clean = crop3(pair.clean, at.top, at.left, size);
    if (pair.noisy) out.noisy = crop3(*pair.noisy, at.top, at.left, size);
    out.condition = pair.condition;
    out.scene_id = pair.scene_id;
    return out;
}

std::vector<ImagePair> extract_patches(const ImagePair& pair, int64_t size, int64_t stride) {
    auto coords = patch_grid(pair.clean.dim(1), pair.clean.dim(2), size, stride);
    std::vector<ImagePair> out;
    out.reserve(coords.size());
    for (auto c : coords) out.push_back(extract_patch(pair, c, size));
    return out;
}

Tensor dihedral_tensor(const Tensor& t, int k) {
    if (t.rank() != 3) throw validation_error("dihedral_tensor expects a [C,H,W] tensor");
    int64_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    if (h != w) throw validation_error("dihedral transforms require a square patch");
    if (k < 0 || k >= 8) throw validation_error("dihedral index must be in [0,8)");
    int64_t n = h;
    bool mirror = k >= 4;
    int rot = k % 4;
    std::vector<double> v(size_t(c * n * n));
    const double* p = t.data();
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < n; ++y)
            for (int64_t x = 0; x < n; ++x) {
                int64_t sy = y, sx = x;
                // invert the quarter-turns (counter-clockwise) ...
                for (int r = 0; r < rot; ++r) {
                    int64_t ty = sx, tx = n - 1 - sy;
                    sy = ty;
                    sx = tx;
                }
                // ... then the mirror, to find the source pixel
                if (mirror) sx = n - 1 - sx;
                v[size_t((ci * n + y) * n + x)] = p[(ci * n + sy) * n + sx];
            }
    return Tensor::from_data({c, n, n}, std::move(v));
}

ImagePair apply_dihedral(const ImagePair& patch, int k) {
    ImagePair out;
    out.clean = dihedral_tensor(patch.clean, k);
    if (patch.noisy) out.noisy = dihedral_tensor(*patch.noisy, k);
    out.condition = patch.condition;
    out.scene_id = patch.scene_id;
    return out;
}

ImagePair augment(const ImagePair& patch, Rng& rng) {
    if (patch.clean.dim(1) != patch.clean.dim(2))
        throw validation_error("augment requires a square patch");
    return apply_dihedral(patch, int(rng.uniform_int(8)));
}

} // namespace nmfg
