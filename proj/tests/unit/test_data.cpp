#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "core/error.hpp"
#include "core/ops.hpp"
#include "data/image.hpp"
#include "data/manifest.hpp"
#include "data/oracle.hpp"
#include "data/patches.hpp"
#include "doctest.h"

using namespace nmfg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
    fs::path d = fs::temp_directory_path() / ("nmfg_test_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

ImageU8 checker_image(int64_t h, int64_t w) {
    ImageU8 img;
    img.h = h;
    img.w = w;
    img.pixels.resize(size_t(h * w * 3));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < 3; ++c)
                img.at(y, x, c) = uint8_t((y * 7 + x * 13 + c * 91) % 256);
    return img;
}

std::vector<uint8_t> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("png round trip preserves bytes exactly") {
    auto dir = temp_dir("png");
    ImageU8 img = checker_image(20, 31);
    save_png_rgb8((dir / "a.png").string(), img);
    ImageU8 back = load_png_rgb8((dir / "a.png").string());
    REQUIRE(back.h == img.h);
    REQUIRE(back.w == img.w);
    CHECK(back.pixels == img.pixels);

    Tensor t = image_to_tensor(img);
    CHECK(t.shape() == Shape{3, 20, 31});
    CHECK(t.data()[0] == double(img.at(0, 0, 0)));
    ImageU8 again = tensor_to_image(t);
    CHECK(again.pixels == img.pixels);
}

TEST_CASE("png loader rejects missing and non-conforming files") {
    auto dir = temp_dir("pngbad");
    CHECK_THROWS_AS(load_png_rgb8((dir / "missing.png").string()), Error);
    std::ofstream((dir / "junk.png").string()) << "not a png at all";
    CHECK_THROWS_AS(load_png_rgb8((dir / "junk.png").string()), Error);
    try {
        load_png_rgb8((dir / "missing.png").string());
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotFound);
    }
}

TEST_CASE("quantize clips and rounds half up") {
    CHECK(quantize_pixel(-3.2) == 0);
    CHECK(quantize_pixel(300.0) == 255);
    CHECK(quantize_pixel(17.49) == 17);
    CHECK(quantize_pixel(17.5) == 18);
    CHECK(quantize_pixel(0.0) == 0);
    CHECK(quantize_pixel(255.0) == 255);
}

TEST_CASE("manifest load validates structure and files") {
    auto dir = temp_dir("manifest");
    save_png_rgb8((dir / "c.png").string(), checker_image(8, 8));
    save_png_rgb8((dir / "n.png").string(), checker_image(8, 8));

    {
        std::ofstream mf(dir / "ok.tsv");
        mf << "# comment line\n";
        mf << "c.png\tn.png\tS6\t800\tscene_a\n";
        mf << "c.png\t-\tGP\t100\tscene_b\n";
    }
    Manifest m = load_manifest((dir / "ok.tsv").string());
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].noisy_path == "n.png");
    CHECK(m.entries[1].noisy_path.empty());
    CHECK(m.registry.cameras == std::vector<std::string>{"GP", "S6"});
    CHECK(m.registry.isos == std::vector<int>{100, 800});
    CHECK(m.registry.camera_index("S6") == 1);
    CHECK(m.registry.iso_index(100) == 0);
    CHECK_THROWS_AS(m.registry.camera_index("nope"), Error);

    CHECK_THROWS_AS(load_manifest((dir / "absent.tsv").string()), Error);

    {
        std::ofstream mf(dir / "short.tsv");
        mf << "c.png\tn.png\tS6\t800\n";
    }
    try {
        load_manifest((dir / "short.tsv").string());
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
        CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }

    {
        std::ofstream mf(dir / "badiso.tsv");
        mf << "c.png\tn.png\tS6\teight\tscene\n";
    }
    CHECK_THROWS_AS(load_manifest((dir / "badiso.tsv").string()), Error);

    {
        std::ofstream mf(dir / "missingimg.tsv");
        mf << "c.png\tgone.png\tS6\t800\tscene\n";
    }
    try {
        load_manifest((dir / "missingimg.tsv").string());
        FAIL("expected ValidationError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ValidationError);
        CHECK(std::string(e.what()).find("gone.png") != std::string::npos);
    }
}

TEST_CASE("manifest save/load round trip") {
    auto dir = temp_dir("manifest_rt");
    save_png_rgb8((dir / "c.png").string(), checker_image(8, 8));
    Manifest m;
    m.base_dir = dir.string();
    m.entries.push_back({"c.png", "", {"CamX", 400}, "sc1"});
    m.registry = build_registry(m.entries);
    save_manifest(m, (dir / "m.tsv").string());
    Manifest back = load_manifest((dir / "m.tsv").string());
    REQUIRE(back.entries.size() == 1);
    CHECK(back.entries[0].clean_path == "c.png");
    CHECK(back.entries[0].condition.camera == "CamX");
    CHECK(back.entries[0].condition.iso == 400);
    CHECK(back.entries[0].scene_id == "sc1");
}

TEST_CASE("load_pair round-trips 8-bit values exactly and checks shapes") {
    auto dir = temp_dir("pairs");
    ImageU8 c = checker_image(10, 12), n = checker_image(10, 12), bad = checker_image(9, 12);
    save_png_rgb8((dir / "c.png").string(), c);
    save_png_rgb8((dir / "n.png").string(), n);
    save_png_rgb8((dir / "bad.png").string(), bad);
    {
        std::ofstream mf(dir / "m.tsv");
        mf << "c.png\tn.png\tS6\t800\ts\n";
        mf << "c.png\tbad.png\tS6\t800\ts2\n";
    }
    Manifest m = load_manifest((dir / "m.tsv").string());
    ImagePair p = load_pair(m, m.entries[0]);
    REQUIRE(p.noisy.has_value());
    for (int64_t y = 0; y < 10; ++y)
        for (int64_t x = 0; x < 12; ++x)
            for (int64_t ch = 0; ch < 3; ++ch)
                CHECK(p.clean.data()[(ch * 10 + y) * 12 + x] == double(c.at(y, x, ch)));
    CHECK_THROWS_AS(load_pair(m, m.entries[1]), Error);
}

TEST_CASE("patch grid counts and full coverage") {
    // 192x192 with 96/48: anchors {0,48,96} each axis -> 9 patches
    CHECK(patch_grid(192, 192, 96, 48).size() == 9);
    // 96x96 -> exactly one patch
    CHECK(patch_grid(96, 96, 96, 48).size() == 1);
    // 100x96 -> grid patch at 0 plus border-anchored at 4
    auto g = patch_grid(100, 96, 96, 48);
    REQUIRE(g.size() == 2);
    CHECK(g[0].top == 0);
    CHECK(g[1].top == 4);
    CHECK_THROWS_AS(patch_grid(95, 200, 96, 48), Error);

    // coverage property over assorted sizes
    for (auto [h, w] : std::vector<std::pair<int64_t, int64_t>>{
             {96, 96}, {97, 101}, {144, 200}, {191, 193}, {250, 99}}) {
        auto coords = patch_grid(h, w, 96, 48);
        std::vector<char> hit(size_t(h * w), 0);
        for (auto c : coords)
            for (int64_t y = c.top; y < c.top + 96; ++y)
                for (int64_t x = c.left; x < c.left + 96; ++x) hit[size_t(y * w + x)] = 1;
        bool all = true;
        for (char v : hit) all = all && v;
        CAPTURE(h);
        CAPTURE(w);
        CHECK(all);
    }
}

TEST_CASE("extract_patches inherits metadata and crops correctly") {
    Rng rng(5);
    ImagePair pair;
    pair.clean = make_uniform_clean(rng, 100, 96);
    pair.noisy = make_uniform_clean(rng, 100, 96);
    pair.condition = {"CamA", 800};
    pair.scene_id = "sc";
    auto ps = extract_patches(pair, 96, 48);
    REQUIRE(ps.size() == 2);
    CHECK(ps[0].condition.camera == "CamA");
    CHECK(ps[0].scene_id == "sc");
    CHECK(ps[1].clean.data()[0] == pair.clean.data()[4 * 96]);  // top=4, left=0
    REQUIRE(ps[0].noisy.has_value());
}

TEST_CASE("dihedral group properties") {
    Rng rng(9);
    Tensor t = make_uniform_clean(rng, 8, 8);

    // identity
    Tensor t0 = dihedral_tensor(t, 0);
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(t0.data()[i] == t.data()[i]);

    // each transform preserves the multiset of values
    for (int k = 0; k < 8; ++k) {
        Tensor tk = dihedral_tensor(t, k);
        std::multiset<double> a(t.data(), t.data() + t.numel());
        std::multiset<double> b(tk.data(), tk.data() + tk.numel());
        CHECK(a == b);
    }

    // four quarter-turns give the identity; double mirror gives the identity
    Tensor r = t;
    for (int i = 0; i < 4; ++i) r = dihedral_tensor(r, 1);
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(r.data()[i] == t.data()[i]);
    Tensor mm = dihedral_tensor(dihedral_tensor(t, 4), 4);
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(mm.data()[i] == t.data()[i]);

    // the 8 transforms are pairwise distinct on generic data
    std::set<std::vector<double>> variants;
    for (int k = 0; k < 8; ++k) {
        Tensor tk = dihedral_tensor(t, k);
        variants.insert(std::vector<double>(tk.data(), tk.data() + tk.numel()));
    }
    CHECK(variants.size() == 8);

    // non-square rejected
    Rng r2(1);
    Tensor ns = make_uniform_clean(r2, 8, 9);
    CHECK_THROWS_AS(dihedral_tensor(ns, 1), Error);
}

TEST_CASE("augment applies clean and noisy identically") {
    Rng rng(21);
    ImagePair p;
    p.clean = make_uniform_clean(rng, 8, 8);
    p.noisy = add(p.clean, Tensor::full({3, 8, 8}, 1.0));
    Rng arng(77);
    ImagePair q = augment(p, arng);
    for (int64_t i = 0; i < q.clean.numel(); ++i)
        CHECK(q.noisy->data()[i] == q.clean.data()[i] + 1.0);
}

TEST_CASE("oracle noise std matches closed form") {
    // beta_s_sq=0, beta_c_sq=4, gain 1 -> every pixel N(0,4), std 2
    SynthCameraParams params = SynthCameraParams::hetero_only(0.0, 4.0, {{100, 1.0}});
    Rng crng(31);
    Tensor clean = make_uniform_clean(crng, 578, 578);  // ~1e6 px/channel
    Rng rng(32);
    Tensor noise = oracle_noise(params, clean, 100, rng);
    double s = 0.0, ss = 0.0;
    int64_t n = noise.numel();
    for (int64_t i = 0; i < n; ++i) {
        s += noise.data()[i];
        ss += noise.data()[i] * noise.data()[i];
    }
    double mean = s / double(n);
    double stddev = std::sqrt(ss / double(n) - mean * mean);
    CHECK(stddev == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("oracle identity kernel leaves noise uncorrelated") {
    SynthCameraParams params = SynthCameraParams::hetero_only(0.0, 4.0, {{100, 1.0}});
    Rng crng(41);
    Tensor clean = make_uniform_clean(crng, 578, 578);
    Rng rng(42);
    Tensor noise = oracle_noise(params, clean, 100, rng);
    // lag-1 horizontal sample correlation
    int64_t h = 578, w = 578;
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    int64_t n = 0;
    for (int64_t c = 0; c < 3; ++c) {
        const double* p = noise.data() + c * h * w;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x + 1 < w; ++x) {
                double a = p[y * w + x], b = p[y * w + x + 1];
                sa += a;
                sb += b;
                saa += a * a;
                sbb += b * b;
                sab += a * b;
                ++n;
            }
    }
    double r = (sab - sa * sb / n) /
               std::sqrt((saa - sa * sa / n) * (sbb - sb * sb / n));
    CHECK(std::abs(r) < 0.01);
}

TEST_CASE("oracle two-tap kernel gives lag-1 correlation near one half") {
    SynthCameraParams params = SynthCameraParams::horizontal_pair(0.0, 4.0, {{100, 1.0}});
    Rng crng(51);
    Tensor clean = make_uniform_clean(crng, 400, 400);
    Rng rng(52);
    Tensor noise = oracle_noise(params, clean, 100, rng);
    int64_t h = 400, w = 400;
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    int64_t n = 0;
    const double* p = noise.data();  // channel 0 is enough
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x + 1 < w; ++x) {
            double a = p[y * w + x], b = p[y * w + x + 1];
            sa += a;
            sb += b;
            saa += a * a;
            sbb += b * b;
            sab += a * b;
            ++n;
        }
    double r = (sab - sa * sb / n) /
               std::sqrt((saa - sa * sa / n) * (sbb - sb * sb / n));
    CHECK(r == doctest::Approx(0.5).epsilon(0.03));

    // renormalization restores the marginal variance on average
    double s = 0, ss = 0;
    for (int64_t i = 0; i < noise.numel(); ++i) {
        s += noise.data()[i];
        ss += noise.data()[i] * noise.data()[i];
    }
    double mean = s / double(noise.numel());
    double stddev = std::sqrt(ss / double(noise.numel()) - mean * mean);
    CHECK(stddev == doctest::Approx(2.0).epsilon(0.02));
}

TEST_CASE("oracle dataset generation is reproducible and self-describing") {
    auto dir1 = temp_dir("oracle1");
    auto dir2 = temp_dir("oracle2");
    SynthCameraParams params = SynthCameraParams::hetero_only(0.5, 4.0, {{100, 1.0}, {400, 2.0}});
    Rng crng(61);
    std::vector<Tensor> cleans = {make_uniform_clean(crng, 32, 32),
                                  make_uniform_clean(crng, 32, 32)};
    std::vector<CameraCondition> conds = {{"CamA", 100}, {"CamA", 400}};

    Manifest m1 = generate_oracle_dataset(params, cleans, conds, 999, dir1.string());
    Manifest m2 = generate_oracle_dataset(params, cleans, conds, 999, dir2.string());
    REQUIRE(m1.entries.size() == 2);
    for (const auto& name :
         {"clean_0000.png", "noisy_0000.png", "clean_0001.png", "noisy_0001.png"})
        CHECK(read_bytes(dir1 / name) == read_bytes(dir2 / name));

    // different seed -> different noisy bytes
    auto dir3 = temp_dir("oracle3");
    generate_oracle_dataset(params, cleans, conds, 1000, dir3.string());
    CHECK(read_bytes(dir1 / "noisy_0000.png") != read_bytes(dir3 / "noisy_0000.png"));

    // sidecar records parameters and seed
    std::ifstream meta(dir1 / "oracle.meta");
    std::string text((std::istreambuf_iterator<char>(meta)),
                     std::istreambuf_iterator<char>());
    CHECK(text.find("beta_s_sq\t0.5") != std::string::npos);
    CHECK(text.find("seed\t999") != std::string::npos);
    CHECK(text.find("gain\t400\t2") != std::string::npos);

    // manifest loads back cleanly from the directory
    Manifest loaded = load_manifest((dir1 / "manifest.tsv").string());
    CHECK(loaded.entries.size() == 2);
    CHECK(loaded.registry.isos == std::vector<int>{100, 400});
}

TEST_CASE("oracle rejects invalid parameters") {
    SynthCameraParams p = SynthCameraParams::hetero_only(0.5, 4.0, {{100, 1.0}});
    p.kernel = {0.4, 0.4};  // sums to 0.8
    p.kernel_h = 1;
    p.kernel_w = 2;
    Rng rng(1);
    Tensor clean = make_uniform_clean(rng, 16, 16);
    CHECK_THROWS_AS(oracle_noise(p, clean, 100, rng), Error);

    SynthCameraParams q = SynthCameraParams::hetero_only(-0.1, 4.0, {{100, 1.0}});
    CHECK_THROWS_AS(oracle_noise(q, clean, 100, rng), Error);

    SynthCameraParams ok = SynthCameraParams::hetero_only(0.5, 4.0, {{100, 1.0}});
    CHECK_THROWS_AS(oracle_noise(ok, clean, 999, rng), Error);  // unknown ISO
}

TEST_CASE("blocky clean generator emits requested levels in blocks") {
    Rng rng(71);
    Tensor t = make_blocky_clean(rng, 32, 32, 8, {40.0, 215.0});
    for (int64_t i = 0; i < t.numel(); ++i) {
        bool ok = t.data()[i] == 40.0 || t.data()[i] == 215.0;
        REQUIRE(ok);
    }
    // block interior constancy per channel
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 8; ++y)
            for (int64_t x = 0; x < 8; ++x)
                CHECK(t.data()[(c * 32 + y) * 32 + x] == t.data()[c * 32 * 32]);
}
