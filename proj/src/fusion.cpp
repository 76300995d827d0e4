#include "nrenet/fusion.hpp"

#include "nrenet/random.hpp"

#include <cmath>
#include <sstream>

namespace nrenet
{

namespace
{

const Tensor& value_of(const Tensor& t) { return t; }
const Tensor& value_of(const Var& v) { return v.value(); }

/// Weights uniform in +-sqrt(1/fan_in).
Tensor init_weight(UniformSource& rng, Shape shape, std::size_t fan_in)
{
    const float bound = std::sqrt(1.0f / static_cast<float>(fan_in));
    return rng.tensor(std::move(shape), -bound, bound);
}

void expect_shape(const std::string& name, const Tensor& t, const Shape& expected)
{
    if (t.shape() != expected)
    {
        throw ShapeError("parameter " + name + " has shape " + to_string(t.shape()) + ", expected " +
                         to_string(expected));
    }
}

void check_inputs(const char* module, const Tensor& a, const Tensor& b, std::size_t channels)
{
    if (a.rank() != 3 || a.shape() != b.shape())
    {
        std::ostringstream os;
        os << module << ": inputs must share a C x H x W shape, got " << to_string(a.shape()) << " and "
           << to_string(b.shape());
        throw ShapeError(os.str());
    }
    if (a.dim(0) != channels)
    {
        std::ostringstream os;
        os << module << ": inputs have " << a.dim(0) << " channels, parameters expect " << channels;
        throw ShapeError(os.str());
    }
}

template <typename T>
T adfm_apply(const T& f_r, const T& f_n, const AdfmParamsT<T>& p, AdfmTrace* trace)
{
    const Shape& shape = value_of(f_r).shape();
    const std::size_t height = shape[1], width = shape[2];

    const T r = flatten_spatial(conv1x1(f_r, p.reduce_r.weight, p.reduce_r.bias));
    const T n = flatten_spatial(conv1x1(f_n, p.reduce_n.weight, p.reduce_n.bias));
    const T attention = softmax_rows(matmul(transpose(r), n));
    const T aggregated = unflatten_spatial(matmul(n, transpose(attention)), height, width);
    const T projected = conv1x1(aggregated, p.project.weight, p.project.bias);
    if (trace != nullptr)
    {
        trace->attention = value_of(attention);
        trace->aggregated = value_of(aggregated);
        trace->projected = value_of(projected);
    }
    return residual_add(f_r, p.alpha, projected);
}

template <typename T>
T eafm_branch(const T& x, const EafmBranchT<T>& b, std::size_t groups, PoolMode pool, Tensor* gate_out)
{
    const T refined = group_norm(conv1x1(conv3x3(x, b.conv3.weight, b.conv3.bias), b.conv1.weight, b.conv1.bias),
                                 groups,
                                 b.gn_gamma,
                                 b.gn_beta);
    const T pooled = pool == PoolMode::average ? global_avg_pool(refined) : global_max_pool(refined);
    const T gate = sigmoid(conv1x1(pooled, b.gate.weight, b.gate.bias));
    if (gate_out != nullptr)
    {
        *gate_out = value_of(gate);
    }
    return mul(refined, gate);
}

template <typename T>
T eafm_apply(const T& f_a, const T& f_e, const EafmParamsT<T>& p, EafmTrace* trace)
{
    const T interaction = mul(f_a, f_e);
    const T ae = eafm_branch(add(interaction, f_a), p.ae, p.groups, p.pool, trace ? &trace->gate_ae : nullptr);
    const T ea = eafm_branch(add(interaction, f_e), p.ea, p.groups, p.pool, trace ? &trace->gate_ea : nullptr);
    return conv1x1(concat_channels(ae, ea), p.adjust.weight, p.adjust.bias);
}

// Both parameter layouts visit leaves in the same fixed order, so leaves are
// matched by position.
template <template <typename> class P>
P<Var> record_params(Tape& tape, const P<Tensor>& p)
{
    std::vector<Var> leaves;
    p.for_each([&](const std::string&, const Tensor& t) { leaves.push_back(tape.leaf(t)); });
    P<Var> vars;
    std::size_t k = 0;
    vars.for_each([&](const std::string&, Var& v) { v = leaves[k++]; });
    return vars;
}

template <template <typename> class P>
P<Tensor> collect_gradients(const Gradients& grads, const P<Var>& vars)
{
    std::vector<Tensor> values;
    vars.for_each([&](const std::string&, const Var& v) { values.push_back(grads[v]); });
    P<Tensor> out;
    std::size_t k = 0;
    out.for_each([&](const std::string&, Tensor& t) { t = std::move(values[k++]); });
    return out;
}

} // namespace

std::vector<std::pair<std::string, Tensor>> named_tensors(const AdfmParams& p)
{
    std::vector<std::pair<std::string, Tensor>> out;
    p.for_each([&out](const std::string& name, const Tensor& t) { out.emplace_back(name, t); });
    return out;
}

std::vector<std::pair<std::string, Tensor>> named_tensors(const EafmParams& p)
{
    std::vector<std::pair<std::string, Tensor>> out;
    p.for_each([&out](const std::string& name, const Tensor& t) { out.emplace_back(name, t); });
    return out;
}

std::size_t default_groups(std::size_t channels) { return channels < 8 ? channels : 8; }

AdfmParams adfm_init(std::size_t c, std::size_t c_prime, std::uint64_t seed)
{
    if (c == 0 || c_prime == 0 || c_prime > c)
    {
        throw std::invalid_argument("adfm_init: need 1 <= C' <= C, got C = " + std::to_string(c) +
                                    ", C' = " + std::to_string(c_prime));
    }
    UniformSource rng(seed);
    AdfmParams p;
    p.reduce_r = {init_weight(rng, {c_prime, c}, c), Tensor::zeros({c_prime})};
    p.reduce_n = {init_weight(rng, {c_prime, c}, c), Tensor::zeros({c_prime})};
    p.project = {init_weight(rng, {c, c_prime}, c_prime), Tensor::zeros({c})};
    p.alpha = Tensor::scalar(0.0f);
    return p;
}

EafmParams eafm_init(std::size_t c, std::size_t groups, std::uint64_t seed)
{
    if (c == 0 || groups == 0 || c % groups != 0)
    {
        throw std::invalid_argument("eafm_init: " + std::to_string(groups) + " groups do not divide " +
                                    std::to_string(c) + " channels");
    }
    UniformSource rng(seed);
    const auto branch = [&rng, c] {
        EafmBranchT<Tensor> b;
        b.conv3 = {init_weight(rng, {c, c, 3, 3}, c * 9), Tensor::zeros({c})};
        b.conv1 = {init_weight(rng, {c, c}, c), Tensor::zeros({c})};
        b.gn_gamma = Tensor::ones({c});
        b.gn_beta = Tensor::zeros({c});
        b.gate = {init_weight(rng, {c, c}, c), Tensor::zeros({c})};
        return b;
    };
    EafmParams p;
    p.ae = branch();
    p.ea = branch();
    p.adjust = {init_weight(rng, {c, 2 * c}, 2 * c), Tensor::zeros({c})};
    p.groups = groups;
    return p;
}

std::size_t channels(const AdfmParams& p) { return p.project.weight.empty() ? 0 : p.project.weight.dim(0); }
std::size_t reduced_channels(const AdfmParams& p) { return p.reduce_r.weight.empty() ? 0 : p.reduce_r.weight.dim(0); }
std::size_t channels(const EafmParams& p) { return p.adjust.weight.empty() ? 0 : p.adjust.weight.dim(0); }

void validate(const AdfmParams& p)
{
    const std::size_t c = channels(p), cp = reduced_channels(p);
    if (c == 0 || cp == 0 || cp > c)
    {
        throw ShapeError("ADFM parameters need 1 <= C' <= C");
    }
    expect_shape("adfm.reduce_r.w", p.reduce_r.weight, {cp, c});
    expect_shape("adfm.reduce_r.b", p.reduce_r.bias, {cp});
    expect_shape("adfm.reduce_n.w", p.reduce_n.weight, {cp, c});
    expect_shape("adfm.reduce_n.b", p.reduce_n.bias, {cp});
    expect_shape("adfm.project.w", p.project.weight, {c, cp});
    expect_shape("adfm.project.b", p.project.bias, {c});
    expect_shape("adfm.alpha", p.alpha, {1});
    p.for_each([](const std::string& name, const Tensor& t) {
        if (!all_finite(t))
        {
            throw std::domain_error("parameter " + name + " holds non-finite values");
        }
    });
}

void validate(const EafmParams& p)
{
    const std::size_t c = channels(p);
    if (c == 0)
    {
        throw ShapeError("EAFM parameters are missing the channel adjust weight");
    }
    if (p.groups == 0 || c % p.groups != 0)
    {
        throw ShapeError("EAFM: " + std::to_string(p.groups) + " groups do not divide " + std::to_string(c) +
                         " channels");
    }
    for (const auto* b : {&p.ae, &p.ea})
    {
        const std::string prefix = b == &p.ae ? "eafm.aE" : "eafm.eA";
        expect_shape(prefix + ".conv3.w", b->conv3.weight, {c, c, 3, 3});
        expect_shape(prefix + ".conv3.b", b->conv3.bias, {c});
        expect_shape(prefix + ".conv1.w", b->conv1.weight, {c, c});
        expect_shape(prefix + ".conv1.b", b->conv1.bias, {c});
        expect_shape(prefix + ".gn.gamma", b->gn_gamma, {c});
        expect_shape(prefix + ".gn.beta", b->gn_beta, {c});
        expect_shape(prefix + ".gate.w", b->gate.weight, {c, c});
        expect_shape(prefix + ".gate.b", b->gate.bias, {c});
    }
    expect_shape("eafm.adjust.w", p.adjust.weight, {c, 2 * c});
    expect_shape("eafm.adjust.b", p.adjust.bias, {c});
    p.for_each([](const std::string& name, const Tensor& t) {
        if (!all_finite(t))
        {
            throw std::domain_error("parameter " + name + " holds non-finite values");
        }
    });
}

Tensor adfm_forward(const Tensor& f_r, const Tensor& f_n, const AdfmParams& p, AdfmTrace* trace)
{
    validate(p);
    check_inputs("adfm_forward", f_r, f_n, channels(p));
    return adfm_apply(f_r, f_n, p, trace);
}

Tensor eafm_forward(const Tensor& f_a, const Tensor& f_e, const EafmParams& p, EafmTrace* trace)
{
    validate(p);
    check_inputs("eafm_forward", f_a, f_e, channels(p));
    return eafm_apply(f_a, f_e, p, trace);
}

Tensor nre_fuse(const Tensor& f_r,
                const Tensor& f_n,
                const Tensor& f_e,
                const AdfmParams& adfm,
                const EafmParams& eafm,
                Tensor* adfm_stage)
{
    Tensor fused = adfm_forward(f_r, f_n, adfm);
    Tensor out = eafm_forward(fused, f_e, eafm);
    if (adfm_stage != nullptr)
    {
        *adfm_stage = std::move(fused);
    }
    return out;
}

AdfmRecording adfm_record(const Tensor& f_r, const Tensor& f_n, const AdfmParams& p, AdfmTrace* trace)
{
    validate(p);
    check_inputs("adfm_record", f_r, f_n, channels(p));
    AdfmRecording rec;
    rec.tape = std::make_unique<Tape>();
    rec.f_r = rec.tape->leaf(f_r);
    rec.f_n = rec.tape->leaf(f_n);
    rec.params = record_params(*rec.tape, p);
    rec.output = adfm_apply(rec.f_r, rec.f_n, rec.params, trace);
    return rec;
}

EafmRecording eafm_record(const Tensor& f_a, const Tensor& f_e, const EafmParams& p)
{
    validate(p);
    check_inputs("eafm_record", f_a, f_e, channels(p));
    EafmRecording rec;
    rec.tape = std::make_unique<Tape>();
    rec.f_a = rec.tape->leaf(f_a);
    rec.f_e = rec.tape->leaf(f_e);
    rec.params = record_params(*rec.tape, p);
    rec.params.groups = p.groups;
    rec.params.pool = p.pool;
    rec.output = eafm_apply(rec.f_a, rec.f_e, rec.params, nullptr);
    return rec;
}

AdfmGradients adfm_gradients(const AdfmRecording& rec, const Tensor& seed_output)
{
    if (!rec.tape)
    {
        throw std::logic_error("adfm_gradients: recording has no tape");
    }
    const Gradients grads = rec.tape->backward(rec.output, seed_output);
    return AdfmGradients{collect_gradients(grads, rec.params), grads[rec.f_r], grads[rec.f_n]};
}

EafmGradients eafm_gradients(const EafmRecording& rec, const Tensor& seed_output)
{
    if (!rec.tape)
    {
        throw std::logic_error("eafm_gradients: recording has no tape");
    }
    const Gradients grads = rec.tape->backward(rec.output, seed_output);
    EafmGradients out{collect_gradients(grads, rec.params), grads[rec.f_a], grads[rec.f_e]};
    out.params.groups = rec.params.groups;
    out.params.pool = rec.params.pool;
    return out;
}

} // namespace nrenet
