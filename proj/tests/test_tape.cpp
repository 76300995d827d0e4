#include "grad_support.hpp"
#include "nrenet/tape.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

using namespace nrenet;
using nrenet::testing::check_primitive;
using nrenet::testing::NoiseAwareResult;

TEST(Backward, IdentityReturnsSeed)
{
    Tape tape;
    const Var x = tape.leaf(Tensor({2, 2}, std::vector<float>{1, 2, 3, 4}));
    const Tensor seed({2, 2}, std::vector<float>{5, -6, 7, 0.5f});
    EXPECT_EQ(tape.backward(x, seed)[x], seed);
}

TEST(Backward, SigmoidSlopeAtZero)
{
    Tape tape;
    const Var x = tape.leaf(Tensor::scalar(0.0f));
    EXPECT_EQ(tape.backward(sigmoid(x), Tensor::ones({1}))[x][0], 0.25f);
}

TEST(Backward, ProductRule)
{
    UniformSource rng(1);
    Tape tape;
    const Tensor a = rng.tensor({3, 2, 2}, -1, 1), b = rng.tensor({3, 2, 2}, -1, 1);
    const Var va = tape.leaf(a), vb = tape.leaf(b);
    const Var out = mul(va, vb);
    const Gradients g = tape.backward(out, Tensor::ones({3, 2, 2}));
    EXPECT_EQ(g[va], b);
    EXPECT_EQ(g[vb], a);
}

TEST(Backward, UnusedInputsGetZeros)
{
    Tape tape;
    const Var used = tape.leaf(Tensor::ones({2}));
    const Var unused = tape.leaf(Tensor::full({3, 1, 1}, 4.0f));
    const Var out = sigmoid(used);
    const Gradients g = tape.backward(out, Tensor::ones({2}));
    EXPECT_EQ(g[unused], Tensor::zeros({3, 1, 1}));
}

TEST(Backward, SeedShapeMismatchThrows)
{
    Tape tape;
    const Var x = tape.leaf(Tensor::ones({2, 3}));
    EXPECT_THROW(tape.backward(softmax_rows(x), Tensor::ones({3, 2})), ShapeError);
}

TEST(Backward, FanOutAccumulates)
{
    Tape tape;
    const Var x = tape.leaf(Tensor({2}, std::vector<float>{3, -1}));
    const Var y = add(mul(x, x), x); // x^2 + x
    const Gradients g = tape.backward(y, Tensor::ones({2}));
    EXPECT_EQ(g[x], Tensor({2}, std::vector<float>{7, -1}));
}

TEST(Backward, VisitsNodesInReverseExecutionOrder)
{
    Tape tape;
    std::vector<std::size_t> visited;
    Var v = tape.leaf(Tensor::ones({1}));
    std::vector<std::size_t> created;
    for (int k = 0; k < 5; ++k)
    {
        const std::size_t id = tape.size();
        created.push_back(id);
        v = tape.record(Tensor::ones({1}), {v}, [&visited, id](const Tensor& g) {
            visited.push_back(id);
            return std::vector<Tensor>{g};
        });
    }
    tape.backward(v, Tensor::ones({1}));
    std::reverse(created.begin(), created.end());
    EXPECT_EQ(visited, created);
    const auto order = tape.reverse_order(v);
    EXPECT_TRUE(std::is_sorted(order.rbegin(), order.rend()));
}

TEST(Backward, TapedValuesMatchUntaped)
{
    UniformSource rng(2);
    const Tensor x = rng.tensor({4, 3, 3}, -1, 1), w = rng.tensor({4, 4, 3, 3}, -1, 1), b = rng.tensor({4}, -1, 1);
    Tape tape;
    const Var out = group_norm(conv3x3(tape.leaf(x), tape.leaf(w), tape.leaf(b)), 2, tape.leaf(b), tape.leaf(b));
    EXPECT_EQ(out.value(), group_norm(conv3x3(x, w, b), 2, b, b));
}

// ---------------------------------------------------------------------------
// finite_diff_check
// ---------------------------------------------------------------------------

TEST(FiniteDiff, SquareAtThree)
{
    const std::vector<Tensor> params{Tensor::scalar(3.0f)};
    const std::vector<Tensor> analytic{Tensor::scalar(6.0f)};
    const std::vector<std::string> names{"x"};
    const ScalarObjective f = [](std::span<const Tensor> p) { return double(p[0][0]) * p[0][0]; };
    const GradReport r = finite_diff_check(f, params, analytic, names, 1e-3f);
    EXPECT_TRUE(r.pass);
    EXPECT_NEAR(r.params[0].numeric, 6.0, 1e-5);
    EXPECT_EQ(r.eps, 1e-3f);
}

TEST(FiniteDiff, LinearIsExactForAnyEps)
{
    const std::vector<Tensor> params{Tensor({3}, std::vector<float>{0.5f, -2.0f, 8.0f})};
    const std::vector<Tensor> analytic{Tensor({3}, std::vector<float>{2.0f, -3.0f, 0.25f})};
    const std::vector<std::string> names{"x"};
    const ScalarObjective f = [](std::span<const Tensor> p) {
        return 2.0 * p[0][0] - 3.0 * p[0][1] + 0.25 * p[0][2];
    };
    for (float eps : {1e-6f, 1e-4f, 1e-3f, 1e-2f})
    {
        const GradReport r = finite_diff_check(f, params, analytic, names, eps);
        EXPECT_LT(r.worst(), 1e-9) << eps;
    }
}

TEST(FiniteDiff, RejectsEpsOutsideRangeAndNonFinite)
{
    const std::vector<Tensor> params{Tensor::scalar(1.0f)};
    const std::vector<Tensor> analytic{Tensor::scalar(1.0f)};
    const std::vector<std::string> names{"x"};
    const ScalarObjective f = [](std::span<const Tensor> p) { return double(p[0][0]); };
    EXPECT_THROW(finite_diff_check(f, params, analytic, names, 1e-7f), std::invalid_argument);
    EXPECT_THROW(finite_diff_check(f, params, analytic, names, 0.1f), std::invalid_argument);
    const ScalarObjective bad = [](std::span<const Tensor> p) { return std::log(double(p[0][0]) - 1.0); };
    EXPECT_THROW(finite_diff_check(bad, params, analytic, names, 1e-2f), std::domain_error);
}

TEST(FiniteDiff, RelativeErrorFormula)
{
    EXPECT_DOUBLE_EQ(relative_error(1.0, 1.5), 0.5 / 1.5);
    EXPECT_DOUBLE_EQ(relative_error(0.0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9), 1e-9 / 1e-8);
}

// ---------------------------------------------------------------------------
// Every primitive's backward rule against central differences, 20 seeds.
//
// The objective is sum(w * y) for random w, evaluated in float32. Each entry
// must satisfy |a - f| <= 1e-3 max(|a|,|f|) + noise, where noise is one
// half-ulp rounding of every output element divided by the step. The literal
// relative-error check cannot hold for near-zero entries in float32: the
// numerator is bounded below by that rounding noise, not by the gradient.
// ---------------------------------------------------------------------------

namespace
{

constexpr int kSeeds = 20;

template <std::size_t N, typename Fn, typename Gen>
void sweep(const char* name, Fn fn, Gen make_inputs)
{
    double worst_excess = 0.0, worst_literal = 0.0;
    for (int s = 0; s < kSeeds; ++s)
    {
        UniformSource rng(7000 + s);
        const std::array<Tensor, N> inputs = make_inputs(rng);
        const NoiseAwareResult r = check_primitive<N>(fn, inputs, rng);
        EXPECT_LE(r.worst_excess, 1.0) << name << " seed " << s;
        worst_excess = std::max(worst_excess, r.worst_excess);
        worst_literal = std::max(worst_literal, r.report.worst());
    }
    ::testing::Test::RecordProperty(std::string(name) + "_literal_rel_err", std::to_string(worst_literal));
    ::testing::Test::RecordProperty(std::string(name) + "_noise_excess", std::to_string(worst_excess));
}

Tensor u(UniformSource& rng, Shape shape) { return rng.tensor(std::move(shape), -1.0f, 1.0f); }

/// Values at least 0.05 apart so a 1e-3 step never changes the argmax.
Tensor separated(UniformSource& rng, Shape shape)
{
    Tensor t(std::move(shape));
    std::vector<std::size_t> order(t.numel());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i)
    {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.unit() * static_cast<float>(i))]);
    }
    for (std::size_t i = 0; i < order.size(); ++i)
    {
        t[order[i]] = -1.0f + 0.05f * static_cast<float>(i) + rng.uniform(0.0f, 0.01f);
    }
    return t;
}

} // namespace

TEST(GradientSweep, Matmul)
{
    sweep<2>("matmul", [](const auto& a, const auto& b) { return matmul(a, b); },
             [](UniformSource& r) { return std::array<Tensor, 2>{u(r, {3, 4}), u(r, {4, 5})}; });
}

TEST(GradientSweep, Transpose)
{
    sweep<1>("transpose", [](const auto& a) { return transpose(a); },
             [](UniformSource& r) { return std::array<Tensor, 1>{u(r, {3, 4})}; });
}

TEST(GradientSweep, Softmax)
{
    sweep<1>("softmax_rows", [](const auto& a) { return softmax_rows(a); },
             [](UniformSource& r) { return std::array<Tensor, 1>{r.tensor({3, 6}, -3.0f, 3.0f)}; });
}

TEST(GradientSweep, Conv1x1)
{
    sweep<3>("conv1x1", [](const auto& x, const auto& w, const auto& b) { return conv1x1(x, w, b); },
             [](UniformSource& r) { return std::array<Tensor, 3>{u(r, {3, 4, 4}), u(r, {2, 3}), u(r, {2})}; });
}

TEST(GradientSweep, Conv3x3)
{
    sweep<3>("conv3x3", [](const auto& x, const auto& w, const auto& b) { return conv3x3(x, w, b); },
             [](UniformSource& r) { return std::array<Tensor, 3>{u(r, {2, 4, 4}), u(r, {3, 2, 3, 3}), u(r, {3})}; });
}

TEST(GradientSweep, GroupNorm)
{
    sweep<3>("group_norm", [](const auto& x, const auto& g, const auto& b) { return group_norm(x, 2, g, b); },
             [](UniformSource& r) { return std::array<Tensor, 3>{u(r, {4, 3, 3}), u(r, {4}), u(r, {4})}; });
}

TEST(GradientSweep, Sigmoid)
{
    sweep<1>("sigmoid", [](const auto& x) { return sigmoid(x); },
             [](UniformSource& r) { return std::array<Tensor, 1>{r.tensor({3, 4, 4}, -4.0f, 4.0f)}; });
}

TEST(GradientSweep, GlobalAvgPool)
{
    sweep<1>("global_avg_pool", [](const auto& x) { return global_avg_pool(x); },
             [](UniformSource& r) { return std::array<Tensor, 1>{u(r, {3, 4, 4})}; });
}

TEST(GradientSweep, GlobalMaxPool)
{
    sweep<1>("global_max_pool", [](const auto& x) { return global_max_pool(x); },
             [](UniformSource& r) { return std::array<Tensor, 1>{separated(r, {3, 4, 4})}; });
}

TEST(GradientSweep, FlattenUnflatten)
{
    sweep<1>("flatten_spatial", [](const auto& x) { return unflatten_spatial(flatten_spatial(x), 2, 6); },
             [](UniformSource& r) { return std::array<Tensor, 1>{u(r, {3, 3, 4})}; });
}

TEST(GradientSweep, Add)
{
    sweep<2>("add", [](const auto& a, const auto& b) { return add(a, b); },
             [](UniformSource& r) { return std::array<Tensor, 2>{u(r, {3, 4, 4}), u(r, {3, 4, 4})}; });
}

TEST(GradientSweep, AddBroadcast)
{
    sweep<2>("add_broadcast", [](const auto& a, const auto& b) { return add(a, b); },
             [](UniformSource& r) { return std::array<Tensor, 2>{u(r, {3, 4, 4}), u(r, {3, 1, 1})}; });
}

TEST(GradientSweep, Mul)
{
    sweep<2>("mul", [](const auto& a, const auto& b) { return mul(a, b); },
             [](UniformSource& r) { return std::array<Tensor, 2>{u(r, {3, 4, 4}), u(r, {3, 4, 4})}; });
}

TEST(GradientSweep, MulBroadcast)
{
    sweep<2>("mul_broadcast", [](const auto& a, const auto& b) { return mul(a, b); },
             [](UniformSource& r) { return std::array<Tensor, 2>{u(r, {3, 4, 4}), u(r, {3, 1, 1})}; });
}

TEST(GradientSweep, Scale)
{
    sweep<2>("scale", [](const auto& x, const auto& s) { return scale(x, s); },
             [](UniformSource& r) { return std::array<Tensor, 2>{u(r, {3, 4, 4}), u(r, {1})}; });
}

TEST(GradientSweep, ResidualAdd)
{
    sweep<3>("residual_add", [](const auto& x, const auto& s, const auto& y) { return residual_add(x, s, y); },
             [](UniformSource& r) { return std::array<Tensor, 3>{u(r, {3, 4, 4}), u(r, {1}), u(r, {3, 4, 4})}; });
}

TEST(GradientSweep, ConcatChannels)
{
    sweep<2>("concat_channels", [](const auto& a, const auto& b) { return concat_channels(a, b); },
             [](UniformSource& r) { return std::array<Tensor, 2>{u(r, {3, 4, 4}), u(r, {2, 4, 4})}; });
}

TEST(GradientSweep, NegativeControlIsDetected)
{
    for (int s = 0; s < kSeeds; ++s)
    {
        UniformSource rng(9000 + s);
        const Tensor a = u(rng, {3, 4}), b = u(rng, {4, 5});
        Tape tape;
        const Var va = tape.leaf(a), vb = tape.leaf(b);
        const Var out = matmul(va, vb);
        const Tensor w = u(rng, {3, 5});
        const Gradients g = tape.backward(out, w);
        Tensor ga = g[va];
        ga[0] = ga[0] * 1.05f + 1e-2f;
        const ScalarObjective f = [&](std::span<const Tensor> v) {
            return nrenet::testing::weighted_sum(matmul(v[0], v[1]), w);
        };
        const std::vector<Tensor> params{a, b}, analytic{ga, g[vb]};
        const std::vector<std::string> names{"a", "b"};
        const auto r = nrenet::testing::noise_aware_check(f, w, out.value(), params, analytic, names, 1e-3f);
        EXPECT_FALSE(r.report.pass);
        EXPECT_GT(r.worst_excess, 1.0);
    }
}
