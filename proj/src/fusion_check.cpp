#include "nrenet/fusion_check.hpp"

#include "nrenet/random.hpp"

#include <cmath>

namespace nrenet
{

namespace
{

double weighted_sum(const Tensor& out, const Tensor& weights)
{
    double s = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i)
    {
        s += static_cast<double>(out[i]) * weights[i];
    }
    return s;
}

/// Shifts every leaf by small noise so no gradient is structurally zero.
template <typename Params>
void jitter(Params& p, UniformSource& rng)
{
    p.for_each([&rng](const std::string&, Tensor& t) {
        for (float& v : t.data())
        {
            v += rng.uniform(-0.2f, 0.2f);
        }
    });
}

void corrupt(std::vector<Tensor>& grads)
{
    for (Tensor& g : grads)
    {
        g[0] = g[0] * 1.05f + 1e-2f;
    }
}

template <typename Params>
void append_params(const Params& p, std::vector<Tensor>& values, std::vector<std::string>& names)
{
    p.for_each([&](const std::string& name, const Tensor& t) {
        names.push_back(name);
        values.push_back(t);
    });
}

double row_error(const Tensor& attention)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < attention.dim(0); ++i)
    {
        double s = 0.0;
        for (std::size_t j = 0; j < attention.dim(1); ++j)
        {
            s += attention.at(i, j);
        }
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

} // namespace

FusionCheckResult check_adfm_gradients(const FusionCheckConfig& cfg, std::uint64_t seed)
{
    UniformSource rng(seed);
    AdfmParams params = adfm_init(cfg.channels, cfg.c_prime, rng.bits());
    jitter(params, rng);
    params.alpha[0] = rng.uniform(0.5f, 1.5f);
    const Shape shape{cfg.channels, cfg.height, cfg.width};
    const Tensor f_r = rng.tensor(shape, -1.0f, 1.0f);
    const Tensor f_n = rng.tensor(shape, -1.0f, 1.0f);
    const Tensor weights = rng.tensor(shape, -1.0f, 1.0f);

    AdfmTrace trace;
    const AdfmRecording rec = adfm_record(f_r, f_n, params, &trace);
    const AdfmGradients grads = adfm_gradients(rec, weights);

    std::vector<Tensor> values{f_r, f_n};
    std::vector<std::string> names{"input.f_r", "input.f_n"};
    append_params(params, values, names);
    std::vector<Tensor> analytic{grads.f_r, grads.f_n};
    grads.params.for_each([&analytic](const std::string&, const Tensor& g) { analytic.push_back(g); });
    if (cfg.perturb_gradients)
    {
        corrupt(analytic);
    }

    const ScalarObjective objective = [&](std::span<const Tensor> v) {
        AdfmParams p;
        std::size_t k = 2;
        p.for_each([&](const std::string&, Tensor& t) { t = v[k++]; });
        return weighted_sum(adfm_forward(v[0], v[1], p), weights);
    };
    return FusionCheckResult{finite_diff_check(objective, values, analytic, names, cfg.eps, cfg.threshold),
                             row_error(trace.attention)};
}

FusionCheckResult check_eafm_gradients(const FusionCheckConfig& cfg, std::uint64_t seed)
{
    UniformSource rng(seed);
    EafmParams params = eafm_init(cfg.channels, cfg.groups, rng.bits());
    jitter(params, rng);
    const Shape shape{cfg.channels, cfg.height, cfg.width};
    const Tensor f_a = rng.tensor(shape, -1.0f, 1.0f);
    const Tensor f_e = rng.tensor(shape, -1.0f, 1.0f);
    const Tensor weights = rng.tensor(shape, -1.0f, 1.0f);

    const EafmRecording rec = eafm_record(f_a, f_e, params);
    const EafmGradients grads = eafm_gradients(rec, weights);

    std::vector<Tensor> values{f_a, f_e};
    std::vector<std::string> names{"input.f_a", "input.f_e"};
    append_params(params, values, names);
    std::vector<Tensor> analytic{grads.f_a, grads.f_e};
    grads.params.for_each([&analytic](const std::string&, const Tensor& g) { analytic.push_back(g); });
    if (cfg.perturb_gradients)
    {
        corrupt(analytic);
    }

    const ScalarObjective objective = [&](std::span<const Tensor> v) {
        EafmParams p;
        p.groups = params.groups;
        p.pool = params.pool;
        std::size_t k = 2;
        p.for_each([&](const std::string&, Tensor& t) { t = v[k++]; });
        return weighted_sum(eafm_forward(v[0], v[1], p), weights);
    };
    return FusionCheckResult{finite_diff_check(objective, values, analytic, names, cfg.eps, cfg.threshold), 0.0};
}

} // namespace nrenet
