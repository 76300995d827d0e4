#pragma once

// Direct-formula double-precision evaluation of the two fusion blocks, written
// with plain loops and no library primitives. Used as the oracle for forward
// values and, via central differences in double, for gradients.
//
// Leaves are flat row-major arrays in a fixed order:
//   adfm: f_r, f_n, reduce_r.w, reduce_r.b, reduce_n.w, reduce_n.b,
//         project.w, project.b, alpha
//   eafm: f_a, f_e, then per branch (aE, eA) conv3.w, conv3.b, conv1.w,
//         conv1.b, gn.gamma, gn.beta, gate.w, gate.b, then adjust.w, adjust.b

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace reference
{

using Vec = std::vector<double>;
using Leaves = std::vector<Vec>;

struct Dims
{
    std::size_t c = 0;
    std::size_t c_prime = 0;
    std::size_t groups = 1;
    std::size_t h = 0;
    std::size_t w = 0;
};

// y[o][p] = b[o] + sum_i W[o][i] x[i][p]
inline Vec pointwise(const Vec& x, std::size_t cin, std::size_t n, const Vec& w, const Vec& b, std::size_t cout)
{
    Vec y(cout * n);
    for (std::size_t o = 0; o < cout; ++o)
    {
        for (std::size_t p = 0; p < n; ++p)
        {
            double s = b[o];
            for (std::size_t i = 0; i < cin; ++i)
            {
                s += w[o * cin + i] * x[i * n + p];
            }
            y[o * n + p] = s;
        }
    }
    return y;
}

inline Vec adfm(const Leaves& l, const Dims& d)
{
    const std::size_t n = d.h * d.w;
    const Vec r = pointwise(l[0], d.c, n, l[2], l[3], d.c_prime);
    const Vec m = pointwise(l[1], d.c, n, l[4], l[5], d.c_prime);

    // A[i][j] = softmax_j( sum_k r[k][i] m[k][j] )
    Vec a(n * n);
    for (std::size_t i = 0; i < n; ++i)
    {
        double peak = -INFINITY;
        for (std::size_t j = 0; j < n; ++j)
        {
            double s = 0.0;
            for (std::size_t k = 0; k < d.c_prime; ++k)
            {
                s += r[k * n + i] * m[k * n + j];
            }
            a[i * n + j] = s;
            peak = std::max(peak, s);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j)
        {
            z += std::exp(a[i * n + j] - peak);
        }
        for (std::size_t j = 0; j < n; ++j)
        {
            a[i * n + j] = std::exp(a[i * n + j] - peak) / z;
        }
    }

    // att[k][p] = sum_j m[k][j] A[p][j]
    Vec att(d.c_prime * n, 0.0);
    for (std::size_t k = 0; k < d.c_prime; ++k)
    {
        for (std::size_t p = 0; p < n; ++p)
        {
            for (std::size_t j = 0; j < n; ++j)
            {
                att[k * n + p] += m[k * n + j] * a[p * n + j];
            }
        }
    }
    const Vec proj = pointwise(att, d.c_prime, n, l[6], l[7], d.c);
    Vec out(d.c * n);
    for (std::size_t q = 0; q < out.size(); ++q)
    {
        out[q] = l[0][q] + l[8][0] * proj[q];
    }
    return out;
}

inline Vec conv3(const Vec& x, const Dims& d, const Vec& w, const Vec& b)
{
    Vec y(d.c * d.h * d.w);
    for (std::size_t o = 0; o < d.c; ++o)
    {
        for (std::size_t yy = 0; yy < d.h; ++yy)
        {
            for (std::size_t xx = 0; xx < d.w; ++xx)
            {
                double s = b[o];
                for (std::size_t i = 0; i < d.c; ++i)
                {
                    for (int ky = 0; ky < 3; ++ky)
                    {
                        for (int kx = 0; kx < 3; ++kx)
                        {
                            const long sy = static_cast<long>(yy) + ky - 1;
                            const long sx = static_cast<long>(xx) + kx - 1;
                            if (sy < 0 || sx < 0 || sy >= static_cast<long>(d.h) || sx >= static_cast<long>(d.w))
                            {
                                continue;
                            }
                            s += w[((o * d.c + i) * 3 + ky) * 3 + kx] * x[(i * d.h + sy) * d.w + sx];
                        }
                    }
                }
                y[(o * d.h + yy) * d.w + xx] = s;
            }
        }
    }
    return y;
}

inline Vec group_norm(const Vec& x, const Dims& d, const Vec& gamma, const Vec& beta, double eps = 1e-5)
{
    const std::size_t n = d.h * d.w;
    const std::size_t per = d.c / d.groups;
    Vec y(x.size());
    for (std::size_t g = 0; g < d.groups; ++g)
    {
        const std::size_t lo = g * per * n, hi = (g + 1) * per * n;
        double mean = 0.0;
        for (std::size_t q = lo; q < hi; ++q)
        {
            mean += x[q];
        }
        mean /= static_cast<double>(hi - lo);
        double var = 0.0;
        for (std::size_t q = lo; q < hi; ++q)
        {
            var += (x[q] - mean) * (x[q] - mean);
        }
        var /= static_cast<double>(hi - lo);
        for (std::size_t q = lo; q < hi; ++q)
        {
            const std::size_t ch = q / n;
            y[q] = gamma[ch] * (x[q] - mean) / std::sqrt(var + eps) + beta[ch];
        }
    }
    return y;
}

inline Vec eafm_branch(const Vec& x, const Dims& d, const Leaves& l, std::size_t k)
{
    const std::size_t n = d.h * d.w;
    const Vec refined =
        group_norm(pointwise(conv3(x, d, l[k], l[k + 1]), d.c, n, l[k + 2], l[k + 3], d.c), d, l[k + 4], l[k + 5]);
    Vec pooled(d.c, 0.0);
    for (std::size_t ch = 0; ch < d.c; ++ch)
    {
        for (std::size_t p = 0; p < n; ++p)
        {
            pooled[ch] += refined[ch * n + p];
        }
        pooled[ch] /= static_cast<double>(n);
    }
    const Vec pre = pointwise(pooled, d.c, 1, l[k + 6], l[k + 7], d.c);
    Vec out(refined.size());
    for (std::size_t ch = 0; ch < d.c; ++ch)
    {
        const double gate = 1.0 / (1.0 + std::exp(-pre[ch]));
        for (std::size_t p = 0; p < n; ++p)
        {
            out[ch * n + p] = refined[ch * n + p] * gate;
        }
    }
    return out;
}

inline Vec eafm(const Leaves& l, const Dims& d)
{
    const std::size_t n = d.h * d.w;
    const Vec& fa = l[0];
    const Vec& fe = l[1];
    Vec in_ae(fa.size()), in_ea(fa.size());
    for (std::size_t q = 0; q < fa.size(); ++q)
    {
        in_ae[q] = fa[q] * fe[q] + fa[q];
        in_ea[q] = fa[q] * fe[q] + fe[q];
    }
    Vec cat = eafm_branch(in_ae, d, l, 2);
    const Vec ea = eafm_branch(in_ea, d, l, 10);
    cat.insert(cat.end(), ea.begin(), ea.end());
    return pointwise(cat, 2 * d.c, n, l[18], l[19], d.c);
}

/// Gradient of sum(weights * f(leaves)) with respect to every leaf, by
/// central differences in double.
template <typename F>
Leaves numeric_gradient(F&& f, Leaves leaves, const Vec& weights, double eps = 1e-6)
{
    const auto objective = [&](const Leaves& at) {
        const Vec out = f(at);
        double s = 0.0;
        for (std::size_t q = 0; q < out.size(); ++q)
        {
            s += weights[q] * out[q];
        }
        return s;
    };
    Leaves grad(leaves.size());
    for (std::size_t k = 0; k < leaves.size(); ++k)
    {
        grad[k].resize(leaves[k].size());
        for (std::size_t i = 0; i < leaves[k].size(); ++i)
        {
            const double original = leaves[k][i];
            leaves[k][i] = original + eps;
            const double up = objective(leaves);
            leaves[k][i] = original - eps;
            const double down = objective(leaves);
            leaves[k][i] = original;
            grad[k][i] = (up - down) / (2.0 * eps);
        }
    }
    return grad;
}

} // namespace reference
