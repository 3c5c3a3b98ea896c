#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace nmfg {

uint64_t splitmix64(uint64_t& state);

// Tags for deriving independent streams from one master seed. Keeping the
// data pipeline, flow training, GAN training and evaluation on separate
// streams means toggling one consumer never shifts the draws of another.
enum class StreamRole : uint64_t {
    Init = 1,
    Split = 2,
    Shuffle = 3,
    Augment = 4,
    Dequantize = 5,
    GanNoise = 6,
    Validation = 7,
    Oracle = 8,
    Synthesis = 9,
    DenoiserInit = 10,
    OracleContent = 11,
};

uint64_t derive_seed(uint64_t base, uint64_t tag_a, uint64_t tag_b = 0);

// xoshiro256++ with an explicit serializable state and a cached Box-Muller
// spare. Avoids std::normal_distribution so draws are stable across
// standard library implementations and can be checkpointed exactly.
class Rng {
public:
    explicit Rng(uint64_t seed = 0);

    uint64_t next_u64();
    double uniform();                      // [0, 1)
    double uniform(double lo, double hi);  // [lo, hi)
    double normal();                       // standard normal
    double normal(double mean, double stddev);
    int64_t uniform_int(int64_t n);        // [0, n)

    void fill_normal(double* dst, int64_t count);
    void fill_uniform(double* dst, int64_t count, double lo, double hi);

    std::vector<int64_t> permutation(int64_t n);

    void save(std::ostream& out) const;
    void load(std::istream& in);
    bool operator==(const Rng& other) const = default;

private:
    uint64_t s_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace nmfg
