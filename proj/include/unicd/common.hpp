#pragma once

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>

namespace unicd {

// ---------------------------------------------------------------------------
// Error taxonomy. CLI maps ConfigError/UsageError -> exit 2, IoError -> exit 3.
// ---------------------------------------------------------------------------

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error("data error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

// ---------------------------------------------------------------------------
// Global numeric modes.
//
// Verification (gradient checks, oracles) runs in f64. Training defaults to
// f32: values are rounded through IEEE binary32 after every op so that all
// tensor contents, parameters included, are exactly representable in the f32
// checkpoint payload.
// ---------------------------------------------------------------------------

enum class Precision { f64, f32 };

Precision precision_mode();
void set_precision_mode(Precision p);

bool grad_enabled();
void set_grad_enabled(bool on);

// Debug-mode finiteness scan after every forward op.
bool debug_checks();
void set_debug_checks(bool on);

struct NoGradGuard {
    bool saved;
    NoGradGuard() : saved(grad_enabled()) { set_grad_enabled(false); }
    ~NoGradGuard() { set_grad_enabled(saved); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

struct PrecisionGuard {
    Precision saved;
    explicit PrecisionGuard(Precision p) : saved(precision_mode()) { set_precision_mode(p); }
    ~PrecisionGuard() { set_precision_mode(saved); }
    PrecisionGuard(const PrecisionGuard&) = delete;
    PrecisionGuard& operator=(const PrecisionGuard&) = delete;
};

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// splitmix64 core; also usable as a counter-based generator keyed by
// (seed, step, layer) for dropout / drop-path, which must reproduce the same
// mask in forward and backward and across runs.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a + 0x9e3779b97f4a7c15ull * (b + 1);
    return splitmix64(s);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ^ 0xa02bdbf7bb3c0a7ull) {
        // warm up so that small seeds diverge immediately
        splitmix64(state_);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    // standard normal via Box-Muller
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

private:
    std::uint64_t state_;
};

// Stateless uniform in [0,1) from a key tuple; used by dropout/drop-path.
inline double keyed_uniform(std::uint64_t seed, std::uint64_t step, std::uint64_t layer,
                            std::uint64_t index) {
    std::uint64_t k = hash_combine(hash_combine(hash_combine(seed, step), layer), index);
    return static_cast<double>(k >> 11) * 0x1.0p-53;
}

} // namespace unicd
