#pragma once

#include "nrenet/tape.hpp"
#include "nrenet/tensor.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace nrenet
{

// ===========================================================================
// Parameter sets. Templated on the leaf type so the same layout serves plain
// tensors (inference) and tape-recorded Vars (gradients).
// ===========================================================================

/// 1x1 (or 3x3) convolution weights and bias.
template <typename T>
struct ConvParams
{
    T weight;
    T bias;
};

/// Cross-attention fusion of RGB and normal features with a gated residual:
///
///   out = F_r + alpha * project( unflatten( Fn~ softmax_rows(Fr~^T Fn~)^T ) )
///
/// where Fr~ and Fn~ are the channel-reduced (C -> C') inputs flattened to
/// C' x N.
template <typename T>
struct AdfmParamsT
{
    ConvParams<T> reduce_r; ///< C' x C
    ConvParams<T> reduce_n; ///< C' x C
    ConvParams<T> project;  ///< C x C'
    T alpha;                ///< one element

    /// Calls f(name, tensor) for every leaf in serialisation order.
    template <typename F>
    void for_each(F&& f) const { visit(*this, f); }
    template <typename F>
    void for_each(F&& f) { visit(*this, f); }

private:
    template <typename Self, typename F>
    static void visit(Self& self, F& f)
    {
        f(std::string("adfm.reduce_r.w"), self.reduce_r.weight);
        f(std::string("adfm.reduce_r.b"), self.reduce_r.bias);
        f(std::string("adfm.reduce_n.w"), self.reduce_n.weight);
        f(std::string("adfm.reduce_n.b"), self.reduce_n.bias);
        f(std::string("adfm.project.w"), self.project.weight);
        f(std::string("adfm.project.b"), self.project.bias);
        f(std::string("adfm.alpha"), self.alpha);
    }
};

/// One EAFM branch: refine (3x3 conv, 1x1 conv, GN) then channel gate.
template <typename T>
struct EafmBranchT
{
    ConvParams<T> conv3; ///< C x C x 3 x 3
    ConvParams<T> conv1; ///< C x C
    T gn_gamma;          ///< C
    T gn_beta;           ///< C
    ConvParams<T> gate;  ///< C x C, applied to the pooled C x 1 x 1 vector
};

enum class PoolMode
{
    average,
    max
};

/// Event-aware fusion of appearance/geometry features F_A with event
/// features F_E. Two branches seeded with F_A*F_E + F_A and F_A*F_E + F_E,
/// concatenated (A+E first) and mapped 2C -> C by `adjust`.
template <typename T>
struct EafmParamsT
{
    EafmBranchT<T> ae; ///< A+E branch
    EafmBranchT<T> ea; ///< E+A branch
    ConvParams<T> adjust; ///< C x 2C
    std::size_t groups = 1;
    PoolMode pool = PoolMode::average;

    template <typename F>
    void for_each(F&& f) const { visit(*this, f); }
    template <typename F>
    void for_each(F&& f) { visit(*this, f); }

private:
    template <typename Self, typename F>
    static void visit(Self& self, F& f)
    {
        const auto branch = [&f](const std::string& prefix, auto& b) {
            f(prefix + ".conv3.w", b.conv3.weight);
            f(prefix + ".conv3.b", b.conv3.bias);
            f(prefix + ".conv1.w", b.conv1.weight);
            f(prefix + ".conv1.b", b.conv1.bias);
            f(prefix + ".gn.gamma", b.gn_gamma);
            f(prefix + ".gn.beta", b.gn_beta);
            f(prefix + ".gate.w", b.gate.weight);
            f(prefix + ".gate.b", b.gate.bias);
        };
        branch("eafm.aE", self.ae);
        branch("eafm.eA", self.ea);
        f(std::string("eafm.adjust.w"), self.adjust.weight);
        f(std::string("eafm.adjust.b"), self.adjust.bias);
    }
};

using AdfmParams = AdfmParamsT<Tensor>;
using EafmParams = EafmParamsT<Tensor>;

/// Flattened (name, tensor) view in serialisation order.
std::vector<std::pair<std::string, Tensor>> named_tensors(const AdfmParams& p);
std::vector<std::pair<std::string, Tensor>> named_tensors(const EafmParams& p);

/// Default GN group count: 8, or C when C < 8.
std::size_t default_groups(std::size_t channels);

/// Conv weights uniform in +-sqrt(1/fan_in), zero biases, alpha = 0.
/// Throws std::invalid_argument unless 1 <= c_prime <= channels.
AdfmParams adfm_init(std::size_t channels, std::size_t c_prime, std::uint64_t seed);

/// Conv weights uniform in +-sqrt(1/fan_in), zero biases, gamma = 1,
/// beta = 0. Throws std::invalid_argument if groups does not divide C.
EafmParams eafm_init(std::size_t channels, std::size_t groups, std::uint64_t seed);

std::size_t channels(const AdfmParams& p);
std::size_t reduced_channels(const AdfmParams& p);
std::size_t channels(const EafmParams& p);

/// Throws ShapeError if tensors are missing or inconsistent with C (and C').
void validate(const AdfmParams& p);
void validate(const EafmParams& p);

// ===========================================================================
// Forward passes
// ===========================================================================

/// Intermediate values of one ADFM evaluation, for inspection in tests.
struct AdfmTrace
{
    Tensor attention; ///< N x N, rows sum to 1
    Tensor aggregated; ///< C' x H x W, attention-weighted normal features
    Tensor projected; ///< C x H x W, the alpha multiplicand
};

struct EafmTrace
{
    Tensor gate_ae; ///< C x 1 x 1
    Tensor gate_ea;
};

Tensor adfm_forward(const Tensor& f_r, const Tensor& f_n, const AdfmParams& p, AdfmTrace* trace = nullptr);
Tensor eafm_forward(const Tensor& f_a, const Tensor& f_e, const EafmParams& p, EafmTrace* trace = nullptr);

/// EAFM(ADFM(F_r, F_n), F_e).
Tensor nre_fuse(const Tensor& f_r,
                const Tensor& f_n,
                const Tensor& f_e,
                const AdfmParams& adfm,
                const EafmParams& eafm,
                Tensor* adfm_stage = nullptr);

// ===========================================================================
// Recording and gradients
// ===========================================================================

/// Tape-recorded forward passes. A default-constructed recording has no tape.
struct AdfmRecording
{
    std::unique_ptr<Tape> tape;
    AdfmParamsT<Var> params;
    Var f_r;
    Var f_n;
    Var output;
};

struct EafmRecording
{
    std::unique_ptr<Tape> tape;
    EafmParamsT<Var> params;
    Var f_a;
    Var f_e;
    Var output;
};

AdfmRecording adfm_record(const Tensor& f_r, const Tensor& f_n, const AdfmParams& p, AdfmTrace* trace = nullptr);
EafmRecording eafm_record(const Tensor& f_a, const Tensor& f_e, const EafmParams& p);

struct AdfmGradients
{
    AdfmParams params;
    Tensor f_r;
    Tensor f_n;
};

struct EafmGradients
{
    EafmParams params;
    Tensor f_a;
    Tensor f_e;
};

/// Backpropagates `seed_output` through a recording. Every parameter gets a
/// gradient of its own shape. Throws std::logic_error if the recording holds
/// no tape.
AdfmGradients adfm_gradients(const AdfmRecording& rec, const Tensor& seed_output);
EafmGradients eafm_gradients(const EafmRecording& rec, const Tensor& seed_output);

} // namespace nrenet
