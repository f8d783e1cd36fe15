#pragma once

#include <cstdint>
#include <random>

namespace oto {

// mt19937_64 output is fully specified by the standard; the float transforms
// below avoid std::*_distribution, whose results vary between library
// implementations. Same seed, same stream, everywhere.
class rng {
public:
    explicit rng(uint64_t seed) : gen_(seed) {}

    uint64_t bits() { return gen_(); }

    double uniform() { // [0,1)
        return (double)(bits() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int64_t uniform_int(int64_t n) { // [0,n)
        return (int64_t)(uniform() * (double)n);
    }

    double normal() { // Box-Muller, cached spare
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0, u2;
        while (u1 == 0.0) u1 = uniform();
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.141592653589793 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) { // Fisher-Yates with our own index draws
        for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_int((int64_t)i)]);
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace oto
