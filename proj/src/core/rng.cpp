#include "core/rng.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "core/error.hpp"

namespace nmfg {

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

uint64_t derive_seed(uint64_t base, uint64_t tag_a, uint64_t tag_b) {
    uint64_t st = base;
    splitmix64(st);
    st ^= tag_a * 0xD1B54A32D192ED03ULL;
    splitmix64(st);
    st ^= tag_b * 0x8CB92BA72F3D8DD7ULL;
    splitmix64(st);
    return st;
}

static inline uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

Rng::Rng(uint64_t seed) {
    uint64_t st = seed;
    for (auto& s : s_) s = splitmix64(st);
}

uint64_t Rng::next_u64() {
    uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    return double(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

double Rng::normal(double mean, double stddev) {
    return mean + stddev * normal();
}

int64_t Rng::uniform_int(int64_t n) {
    if (n <= 0) throw validation_error("uniform_int requires n > 0");
    // rejection sampling keeps the distribution exactly uniform
    uint64_t un = uint64_t(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return int64_t(v % un);
}

void Rng::fill_normal(double* dst, int64_t count) {
    for (int64_t i = 0; i < count; ++i) dst[i] = normal();
}

void Rng::fill_uniform(double* dst, int64_t count, double lo, double hi) {
    for (int64_t i = 0; i < count; ++i) dst[i] = uniform(lo, hi);
}

std::vector<int64_t> Rng::permutation(int64_t n) {
    std::vector<int64_t> p(n);
    for (int64_t i = 0; i < n; ++i) p[i] = i;
    for (int64_t i = n - 1; i > 0; --i) {
        int64_t j = uniform_int(i + 1);
        std::swap(p[i], p[j]);
    }
    return p;
}

void Rng::save(std::ostream& out) const {
    out.write(reinterpret_cast<const char*>(s_), sizeof(s_));
    out.write(reinterpret_cast<const char*>(&spare_), sizeof(spare_));
    char flag = has_spare_ ? 1 : 0;
    out.write(&flag, 1);
}

void Rng::load(std::istream& in) {
    in.read(reinterpret_cast<char*>(s_), sizeof(s_));
    in.read(reinterpret_cast<char*>(&spare_), sizeof(spare_));
    char flag = 0;
    in.read(&flag, 1);
    has_spare_ = flag != 0;
    if (!in) throw format_error("truncated rng state");
}

} // namespace nmfg
