#pragma once

#include <optional>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace nmfg {

struct CameraCondition {
    std::string camera;
    int iso = 0;
};

// Sorted registries make one-hot indices stable across runs and processes:
// cameras lexicographic, ISO levels ascending.
struct ConditionRegistry {
    std::vector<std::string> cameras;
    std::vector<int> isos;

    int camera_index(const std::string& name) const;  // UnknownCondition if absent
    int iso_index(int iso) const;                     // UnknownCondition if absent
    int64_t onehot_size() const { return int64_t(cameras.size() + isos.size()); }
    bool operator==(const ConditionRegistry&) const = default;
};

struct ManifestEntry {
    std::string clean_path;
    std::string noisy_path;  // empty when the record has no noisy image
    CameraCondition condition;
    std::string scene_id;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    ConditionRegistry registry;
    std::string base_dir;  // directory of the manifest file; relative paths resolve against it

    std::string resolve(const std::string& path) const;
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);
ConditionRegistry build_registry(const std::vector<ManifestEntry>& entries);

struct ImagePair {
    Tensor clean;                 // [3,H,W], 0-255
    std::optional<Tensor> noisy;  // same shape when present
    CameraCondition condition;
    std::string scene_id;
};

ImagePair load_pair(const Manifest& m, const ManifestEntry& entry);

} // namespace nmfg
