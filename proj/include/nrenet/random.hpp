#pragma once

#include "nrenet/tensor.hpp"

#include <cstdint>
#include <random>

namespace nrenet
{

/// Uniform floats from raw mt19937_64 bits; unlike std distributions the
/// sequence is identical across standard library implementations.
class UniformSource
{
public:
    explicit UniformSource(std::uint64_t seed) : engine_(seed) {}

    /// In [0, 1), 24-bit resolution.
    float unit()
    {
        const auto bits = static_cast<std::uint32_t>(engine_() >> 40);
        return static_cast<float>(bits) * 0x1.0p-24f;
    }

    float uniform(float lo, float hi) { return lo + (hi - lo) * unit(); }

    Tensor tensor(Shape shape, float lo, float hi)
    {
        Tensor t(std::move(shape));
        for (float& v : t.data())
        {
            v = uniform(lo, hi);
        }
        return t;
    }

    std::uint64_t bits() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

} // namespace nrenet
