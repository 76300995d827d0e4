#pragma once

#include "nrenet/tensor.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

namespace nrenet
{

class Tape;

/// Handle to a value recorded on a Tape.
struct Var
{
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

/// Gradient of the seeded output with respect to every recorded node.
class Gradients
{
public:
    Gradients() = default;
    explicit Gradients(std::vector<std::optional<Tensor>> grads, const Tape* tape);

    /// Gradient for `v`; zeros of v's shape when v did not influence the output.
    Tensor operator[](const Var& v) const;

private:
    std::vector<std::optional<Tensor>> grads_;
    const Tape* tape_ = nullptr;
};

/// Ordered record of executed primitives for one forward evaluation.
///
/// Nodes are appended in execution order; backward() walks them in exact
/// reverse. A tape is not copyable so it cannot be shared between
/// evaluations by accident.
class Tape
{
public:
    /// Given the gradient of a node's output, returns one gradient per parent
    /// (same order as the parents passed to record()).
    using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value);
    Var record(Tensor value, std::vector<Var> parents, BackwardFn backward);

    const Tensor& value(const Var& v) const;
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Reverse-mode accumulation from `output` seeded with `seed`.
    /// Throws ShapeError if the seed shape differs from the output's.
    Gradients backward(const Var& output, const Tensor& seed) const;

    /// Node ids in the order backward() visits them (for inspection).
    std::vector<std::size_t> reverse_order(const Var& output) const;

private:
    struct Node
    {
        Tensor value;
        std::vector<std::size_t> parents;
        BackwardFn backward;
    };

    void check_owned(const Var& v) const;

    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Recording counterparts of the Tensor primitives. Each computes its value
// with the Tensor overload, so taped and untaped evaluations agree bit for bit.
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& x);
Var softmax_rows(const Var& x);
Var conv1x1(const Var& x, const Var& weight, const Var& bias);
Var conv3x3(const Var& x, const Var& weight, const Var& bias);
Var group_norm(const Var& x, std::size_t groups, const Var& gamma, const Var& beta, float eps = kGroupNormEps);
Var sigmoid(const Var& x);
Var global_avg_pool(const Var& x);
Var global_max_pool(const Var& x);
Var flatten_spatial(const Var& x);
Var unflatten_spatial(const Var& y, std::size_t height, std::size_t width);
Var elementwise(ElementwiseOp op, const Var& a, const Var& b);
inline Var add(const Var& a, const Var& b) { return elementwise(ElementwiseOp::add, a, b); }
inline Var mul(const Var& a, const Var& b) { return elementwise(ElementwiseOp::mul, a, b); }
Var scale(const Var& x, const Var& s);
Var residual_add(const Var& x, const Var& s, const Var& y);
Var concat_channels(const Var& a, const Var& b);

} // namespace nrenet
