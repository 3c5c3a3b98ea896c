#include "data/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "core/error.hpp"
#include "data/image.hpp"

namespace fs = std::filesystem;

namespace nmfg {

int ConditionRegistry::camera_index(const std::string& name) const {
    auto it = std::find(cameras.begin(), cameras.end(), name);
    if (it == cameras.end()) throw unknown_condition("camera not in registry: " + name);
    return int(it - cameras.begin());
}

int ConditionRegistry::iso_index(int iso) const {
    auto it = std::find(isos.begin(), isos.end(), iso);
    if (it == isos.end())
        throw unknown_condition("ISO level not in registry: " + std::to_string(iso));
    return int(it - isos.begin());
}

std::string Manifest::resolve(const std::string& path) const {
    fs::path p(path);
    if (p.is_absolute() || base_dir.empty()) return path;
    return (fs::path(base_dir) / p).string();
}

ConditionRegistry build_registry(const std::vector<ManifestEntry>& entries) {
    std::set<std::string> cams;
    std::set<int> isos;
    for (const auto& e : entries) {
        cams.insert(e.condition.camera);
        isos.insert(e.condition.iso);
    }
    ConditionRegistry reg;
    reg.cameras.assign(cams.begin(), cams.end());
    reg.isos.assign(isos.begin(), isos.end());
    return reg;
}

static std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, '\t')) out.push_back(field);
    return out;
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw not_found("manifest not found: " + path);

    Manifest m;
    m.base_dir = fs::path(path).parent_path().string();

    std::string line;
    int64_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto fields = split_tabs(line);
        if (fields.size() != 5)
            throw parse_error("manifest row " + std::to_string(row) + ": expected 5 tab-separated fields, got " +
                              std::to_string(fields.size()));
        ManifestEntry e;
        e.clean_path = fields[0];
        e.noisy_path = fields[1] == "-" ? std::string() : fields[1];
        e.condition.camera = fields[2];
        try {
            size_t pos = 0;
            e.condition.iso = std::stoi(fields[3], &pos);
            if (pos != fields[3].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw parse_error("manifest row " + std::to_string(row) + ": ISO value '" + fields[3] +
                              "' is not an integer");
        }
        if (e.condition.iso <= 0)
            throw parse_error("manifest row " + std::to_string(row) + ": ISO must be positive");
        e.scene_id = fields[4];
        if (e.clean_path.empty() || e.condition.camera.empty() || e.scene_id.empty())
            throw parse_error("manifest row " + std::to_string(row) + ": empty field");
        m.entries.push_back(std::move(e));
    }

    for (const auto& e : m.entries) {
        if (!fs::exists(m.resolve(e.clean_path)))
            throw validation_error("manifest references missing image: " + e.clean_path);
        if (!e.noisy_path.empty() && !fs::exists(m.resolve(e.noisy_path)))
            throw validation_error("manifest references missing image: " + e.noisy_path);
    }
    m.registry = build_registry(m.entries);
    return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write manifest: " + path);
    out << "# clean_path\tnoisy_path\tcamera_name\tiso_value\tscene_id\n";
    for (const auto& e : m.entries) {
        out << e.clean_path << '\t' << (e.noisy_path.empty() ? "-" : e.noisy_path) << '\t'
            << e.condition.camera << '\t' << e.condition.iso << '\t' << e.scene_id << '\n';
    }
    if (!out) throw validation_error("failed writing manifest: " + path);
}

ImagePair load_pair(const Manifest& m, const ManifestEntry& entry) {
    ImagePair pair;
    pair.clean = image_to_tensor(load_png_rgb8(m.resolve(entry.clean_path)));
    if (!entry.noisy_path.empty()) {
        Tensor noisy = image_to_tensor(load_png_rgb8(m.resolve(entry.noisy_path)));
        if (noisy.shape() != pair.clean.shape())
            throw validation_error("clean/noisy shape mismatch for scene " + entry.scene_id +
                                   ": " + shape_str(pair.clean.shape()) + " vs " +
                                   shape_str(noisy.shape()));
        pair.noisy = std::move(noisy);
    }
    pair.condition = entry.condition;
    pair.scene_id = entry.scene_id;
    return pair;
}

} // namespace nmfg
