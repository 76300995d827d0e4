#pragma once

#include "nrenet/fusion.hpp"
#include "nrenet/gradcheck.hpp"

#include <cstdint>

namespace nrenet
{

/// Problem size and tolerances for a fusion gradient check.
struct FusionCheckConfig
{
    std::size_t channels = 8;
    std::size_t c_prime = 4;
    std::size_t groups = 2;
    std::size_t height = 4;
    std::size_t width = 4;
    float eps = 1e-3f;
    double threshold = 1e-3;
    /// Corrupts the analytic gradients before comparison (negative control).
    bool perturb_gradients = false;
};

struct FusionCheckResult
{
    GradReport report;
    /// Largest |row sum - 1| over the ADFM attention matrix (0 for EAFM).
    double attention_row_error = 0.0;
};

/// Random inputs and generic parameters (non-zero alpha, biases and GN
/// affine terms) drawn from `seed`; objective sum(w * output) for a random
/// weight tensor w. Reports every parameter and both inputs.
FusionCheckResult check_adfm_gradients(const FusionCheckConfig& config, std::uint64_t seed);
FusionCheckResult check_eafm_gradients(const FusionCheckConfig& config, std::uint64_t seed);

} // namespace nrenet
