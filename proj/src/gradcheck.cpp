#include "nrenet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace nrenet
{

double GradReport::worst() const
{
    double w = 0.0;
    for (const auto& p : params)
    {
        w = std::max(w, p.max_rel_error);
    }
    return w;
}

double relative_error(double analytic, double numeric)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

GradReport finite_diff_check(const ScalarObjective& objective,
                             std::span<const Tensor> params,
                             std::span<const Tensor> analytic,
                             std::span<const std::string> names,
                             float eps,
                             double threshold)
{
    if (!(eps >= 1e-6f && eps <= 1e-2f))
    {
        throw std::invalid_argument("finite_diff_check: eps must lie in [1e-6, 1e-2]");
    }
    if (params.size() != analytic.size() || params.size() != names.size())
    {
        throw std::invalid_argument("finite_diff_check: params, gradients and names differ in length");
    }
    const auto evaluate = [&objective](std::span<const Tensor> p) {
        const double v = objective(p);
        if (!std::isfinite(v))
        {
            throw std::domain_error("finite_diff_check: objective evaluated to a non-finite value");
        }
        return v;
    };

    GradReport report;
    report.eps = eps;
    report.threshold = threshold;
    std::vector<Tensor> work(params.begin(), params.end());
    for (std::size_t k = 0; k < work.size(); ++k)
    {
        if (analytic[k].shape() != params[k].shape())
        {
            throw ShapeError("finite_diff_check: gradient for " + names[k] + " has shape " +
                             to_string(analytic[k].shape()) + ", parameter has " + to_string(params[k].shape()));
        }
        ParamGradError entry{names[k]};
        entry.numeric_gradient = Tensor(params[k].shape(), 0.0f);
        for (std::size_t i = 0; i < work[k].numel(); ++i)
        {
            const float original = work[k][i];
            const float up = original + eps;
            const float down = original - eps;
            work[k][i] = up;
            const double f_up = evaluate(work);
            work[k][i] = down;
            const double f_down = evaluate(work);
            work[k][i] = original;

            const double numeric = (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
            entry.numeric_gradient[i] = static_cast<float>(numeric);
            const double err = relative_error(analytic[k][i], numeric);
            if (err > entry.max_rel_error || i == 0)
            {
                entry.max_rel_error = err;
                entry.worst_index = i;
                entry.analytic = analytic[k][i];
                entry.numeric = numeric;
            }
        }
        report.pass = report.pass && entry.max_rel_error < threshold;
        report.params.push_back(std::move(entry));
    }
    return report;
}

} // namespace nrenet
