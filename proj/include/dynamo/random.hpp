#pragma once

#include <cstdint>
#include <random>

#include "dynamo/tensor.hpp"

namespace dynamo {

// Seeded RNG wrapper. Child streams are derived with splitmix-style mixing so
// independent subsystems (init, sampling, noise, corruption) never share state.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), gen_(seed) {}

    Rng child(uint64_t stream_id) const {
        uint64_t z = seed_ + 0x9E3779B97F4A7C15ull * (stream_id + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return Rng(z ^ (z >> 31));
    }

    uint64_t seed() const { return seed_; }

    float normal(float mean = 0.0f, float stddev = 1.0f) {
        std::normal_distribution<float> d(mean, stddev);
        return d(gen_);
    }
    float uniform(float lo = 0.0f, float hi = 1.0f) {
        std::uniform_real_distribution<float> d(lo, hi);
        return d(gen_);
    }
    // Uniform integer in [0, n)
    int64_t index(int64_t n) {
        std::uniform_int_distribution<int64_t> d(0, n - 1);
        return d(gen_);
    }
    bool bernoulli(double p) {
        std::bernoulli_distribution d(p);
        return d(gen_);
    }
    uint64_t bits() { return gen_(); }

    void fill_normal(Tensor& t, float mean = 0.0f, float stddev = 1.0f) {
        std::normal_distribution<float> d(mean, stddev);
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = d(gen_);
    }
    void fill_uniform(Tensor& t, float lo, float hi) {
        std::uniform_real_distribution<float> d(lo, hi);
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = d(gen_);
    }

private:
    uint64_t seed_;
    std::mt19937_64 gen_;
};

}  // namespace dynamo
