#pragma once

#include "nrenet/tensor.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace nrenet
{

/// Worst disagreement between analytic and central-difference gradients for
/// one parameter tensor.
struct ParamGradError
{
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    Tensor numeric_gradient; ///< full central-difference estimate
};

struct GradReport
{
    std::vector<ParamGradError> params;
    float eps = 0.0f;
    double threshold = 0.0;
    bool pass = true;

    double worst() const;
};

/// |a - f| / max(|a|, |f|, 1e-8)
double relative_error(double analytic, double numeric);

/// Scalar objective over a full parameter list.
using ScalarObjective = std::function<double(std::span<const Tensor> params)>;

/// Compares `analytic[k]` against central differences of `objective` with
/// respect to every coordinate of `params[k]`.
///
/// The difference quotient divides by the step actually taken after the
/// perturbed coordinate is rounded to float. Throws std::invalid_argument for
/// eps outside [1e-6, 1e-2] or mismatched lists, std::domain_error when the
/// objective returns a non-finite value.
GradReport finite_diff_check(const ScalarObjective& objective,
                             std::span<const Tensor> params,
                             std::span<const Tensor> analytic,
                             std::span<const std::string> names,
                             float eps,
                             double threshold = 1e-3);

} // namespace nrenet
