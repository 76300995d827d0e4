#include "nrenet/tape.hpp"

#include <cmath>
#include <sstream>

namespace nrenet
{

const Tensor& Var::value() const
{
    if (tape == nullptr)
    {
        throw std::logic_error("Var is not attached to a tape");
    }
    return tape->value(*this);
}

Gradients::Gradients(std::vector<std::optional<Tensor>> grads, const Tape* tape)
    : grads_(std::move(grads)), tape_(tape)
{
}

Tensor Gradients::operator[](const Var& v) const
{
    if (v.tape != tape_ || v.id >= grads_.size())
    {
        throw std::logic_error("gradient requested for a Var from another tape");
    }
    if (grads_[v.id])
    {
        return *grads_[v.id];
    }
    return Tensor::zeros(v.shape());
}

void Tape::check_owned(const Var& v) const
{
    if (v.tape != this || v.id >= nodes_.size())
    {
        throw std::logic_error("Var does not belong to this tape");
    }
}

Var Tape::leaf(Tensor value)
{
    nodes_.push_back(Node{std::move(value), {}, {}});
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<Var> parents, BackwardFn backward)
{
    std::vector<std::size_t> ids;
    ids.reserve(parents.size());
    for (const auto& p : parents)
    {
        check_owned(p);
        ids.push_back(p.id);
    }
    nodes_.push_back(Node{std::move(value), std::move(ids), std::move(backward)});
    return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(const Var& v) const
{
    check_owned(v);
    return nodes_[v.id].value;
}

std::vector<std::size_t> Tape::reverse_order(const Var& output) const
{
    check_owned(output);
    std::vector<std::size_t> order;
    for (std::size_t id = output.id + 1; id-- > 0;)
    {
        order.push_back(id);
    }
    return order;
}

Gradients Tape::backward(const Var& output, const Tensor& seed) const
{
    check_owned(output);
    if (seed.shape() != nodes_[output.id].value.shape())
    {
        throw ShapeError("backward: seed shape " + to_string(seed.shape()) + " does not match output shape " +
                         to_string(nodes_[output.id].value.shape()));
    }
    std::vector<std::optional<Tensor>> grads(nodes_.size());
    grads[output.id] = seed;
    for (std::size_t id : reverse_order(output))
    {
        const Node& node = nodes_[id];
        if (!grads[id] || !node.backward)
        {
            continue;
        }
        std::vector<Tensor> parent_grads = node.backward(*grads[id]);
        for (std::size_t k = 0; k < node.parents.size(); ++k)
        {
            auto& slot = grads[node.parents[k]];
            if (slot)
            {
                slot = add(*slot, parent_grads[k]);
            }
            else
            {
                slot = std::move(parent_grads[k]);
            }
        }
    }
    return Gradients(std::move(grads), this);
}

namespace
{

Tape& common_tape(std::initializer_list<const Var*> vars)
{
    Tape* tape = (*vars.begin())->tape;
    for (const Var* v : vars)
    {
        if (v->tape == nullptr || v->tape != tape)
        {
            throw std::logic_error("operands are recorded on different tapes");
        }
    }
    return *tape;
}

/// Sum of a C x H x W gradient over spatial positions, shaped C x 1 x 1.
Tensor reduce_spatial(const Tensor& g)
{
    const std::size_t channels = g.dim(0), n = g.dim(1) * g.dim(2);
    Tensor out({channels, 1, 1});
    for (std::size_t c = 0; c < channels; ++c)
    {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
        {
            s += g[c * n + i];
        }
        out[c] = static_cast<float>(s);
    }
    return out;
}

Tensor bias_grad(const Tensor& g)
{
    const std::size_t channels = g.dim(0), n = g.dim(1) * g.dim(2);
    Tensor out({channels});
    out.as_matrix(1, channels) = g.as_matrix(channels, n).rowwise().sum().transpose();
    return out;
}

} // namespace

Var matmul(const Var& a, const Var& b)
{
    Tape& tape = common_tape({&a, &b});
    const Tensor av = a.value(), bv = b.value();
    return tape.record(matmul(av, bv), {a, b}, [av, bv](const Tensor& g) {
        return std::vector<Tensor>{matmul(g, transpose(bv)), matmul(transpose(av), g)};
    });
}

Var transpose(const Var& x)
{
    Tape& tape = common_tape({&x});
    return tape.record(transpose(x.value()), {x}, [](const Tensor& g) { return std::vector<Tensor>{transpose(g)}; });
}

Var softmax_rows(const Var& x)
{
    Tape& tape = common_tape({&x});
    Tensor y = softmax_rows(x.value());
    return tape.record(y, {x}, [y](const Tensor& g) {
        const std::size_t rows = y.dim(0), cols = y.dim(1);
        Tensor dx(y.shape());
        for (std::size_t i = 0; i < rows; ++i)
        {
            double dot = 0.0;
            for (std::size_t j = 0; j < cols; ++j)
            {
                dot += static_cast<double>(g.at(i, j)) * y.at(i, j);
            }
            for (std::size_t j = 0; j < cols; ++j)
            {
                dx.at(i, j) = static_cast<float>(y.at(i, j) * (g.at(i, j) - dot));
            }
        }
        return std::vector<Tensor>{dx};
    });
}

Var conv1x1(const Var& x, const Var& weight, const Var& bias)
{
    Tape& tape = common_tape({&x, &weight, &bias});
    const Tensor xv = x.value(), wv = weight.value();
    return tape.record(conv1x1(xv, wv, bias.value()), {x, weight, bias}, [xv, wv](const Tensor& g) {
        const std::size_t c_in = xv.dim(0), c_out = wv.dim(0), n = xv.dim(1) * xv.dim(2);
        Tensor dx(xv.shape());
        dx.as_matrix(c_in, n).noalias() = wv.as_matrix(c_out, c_in).transpose() * g.as_matrix(c_out, n);
        Tensor dw(wv.shape());
        dw.as_matrix(c_out, c_in).noalias() = g.as_matrix(c_out, n) * xv.as_matrix(c_in, n).transpose();
        return std::vector<Tensor>{dx, dw, bias_grad(g)};
    });
}

Var conv3x3(const Var& x, const Var& weight, const Var& bias)
{
    Tape& tape = common_tape({&x, &weight, &bias});
    const Tensor xv = x.value(), wv = weight.value();
    return tape.record(conv3x3(xv, wv, bias.value()), {x, weight, bias}, [xv, wv](const Tensor& g) {
        const std::size_t c_in = xv.dim(0), c_out = wv.dim(0), n = xv.dim(1) * xv.dim(2);
        const Tensor cols = detail::im2col3x3(xv);
        Tensor dcols({c_in * 9, n});
        dcols.as_matrix(c_in * 9, n).noalias() = wv.as_matrix(c_out, c_in * 9).transpose() * g.as_matrix(c_out, n);
        Tensor dw(wv.shape());
        dw.as_matrix(c_out, c_in * 9).noalias() = g.as_matrix(c_out, n) * cols.as_matrix(c_in * 9, n).transpose();
        return std::vector<Tensor>{detail::col2im3x3(dcols, c_in, xv.dim(1), xv.dim(2)), dw, bias_grad(g)};
    });
}

Var group_norm(const Var& x, std::size_t groups, const Var& gamma, const Var& beta, float eps)
{
    Tape& tape = common_tape({&x, &gamma, &beta});
    const Tensor xv = x.value(), gv = gamma.value();
    return tape.record(group_norm(xv, groups, gv, beta.value(), eps),
                       {x, gamma, beta},
                       [xv, gv, groups, eps](const Tensor& g) {
                           const std::size_t channels = xv.dim(0), n = xv.dim(1) * xv.dim(2);
                           const std::size_t per_group = channels / groups, count = per_group * n;
                           Tensor dx(xv.shape()), dgamma({channels}), dbeta({channels});
                           std::vector<double> xhat(count), dxhat(count);
                           for (std::size_t grp = 0; grp < groups; ++grp)
                           {
                               const std::size_t base = grp * count;
                               double mean = 0.0;
                               for (std::size_t i = 0; i < count; ++i)
                               {
                                   mean += xv[base + i];
                               }
                               mean /= static_cast<double>(count);
                               double var = 0.0;
                               for (std::size_t i = 0; i < count; ++i)
                               {
                                   const double d = xv[base + i] - mean;
                                   var += d * d;
                               }
                               var /= static_cast<double>(count);
                               const double inv_std = 1.0 / std::sqrt(var + eps);
                               double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                               for (std::size_t i = 0; i < count; ++i)
                               {
                                   const std::size_t c = (base + i) / n;
                                   xhat[i] = (xv[base + i] - mean) * inv_std;
                                   dxhat[i] = static_cast<double>(g[base + i]) * gv[c];
                                   mean_dxhat += dxhat[i];
                                   mean_dxhat_xhat += dxhat[i] * xhat[i];
                               }
                               mean_dxhat /= static_cast<double>(count);
                               mean_dxhat_xhat /= static_cast<double>(count);
                               for (std::size_t i = 0; i < count; ++i)
                               {
                                   dx[base + i] =
                                       static_cast<float>(inv_std * (dxhat[i] - mean_dxhat - xhat[i] * mean_dxhat_xhat));
                               }
                               for (std::size_t c = grp * per_group; c < (grp + 1) * per_group; ++c)
                               {
                                   double sg = 0.0, sb = 0.0;
                                   for (std::size_t i = 0; i < n; ++i)
                                   {
                                       const double gi = g[c * n + i];
                                       sg += gi * xhat[c * n + i - base];
                                       sb += gi;
                                   }
                                   dgamma[c] = static_cast<float>(sg);
                                   dbeta[c] = static_cast<float>(sb);
                               }
                           }
                           return std::vector<Tensor>{dx, dgamma, dbeta};
                       });
}

Var sigmoid(const Var& x)
{
    Tape& tape = common_tape({&x});
    Tensor y = sigmoid(x.value());
    return tape.record(y, {x}, [y](const Tensor& g) {
        Tensor dx(y.shape());
        for (std::size_t i = 0; i < y.numel(); ++i)
        {
            dx[i] = g[i] * y[i] * (1.0f - y[i]);
        }
        return std::vector<Tensor>{dx};
    });
}

Var global_avg_pool(const Var& x)
{
    Tape& tape = common_tape({&x});
    const Shape shape = x.shape();
    return tape.record(global_avg_pool(x.value()), {x}, [shape](const Tensor& g) {
        const std::size_t n = shape[1] * shape[2];
        Tensor dx(shape);
        for (std::size_t c = 0; c < shape[0]; ++c)
        {
            const float share = g[c] / static_cast<float>(n);
            for (std::size_t i = 0; i < n; ++i)
            {
                dx[c * n + i] = share;
            }
        }
        return std::vector<Tensor>{dx};
    });
}

Var global_max_pool(const Var& x)
{
    Tape& tape = common_tape({&x});
    const Tensor xv = x.value();
    return tape.record(global_max_pool(xv), {x}, [xv](const Tensor& g) {
        const std::size_t n = xv.dim(1) * xv.dim(2);
        Tensor dx(xv.shape());
        for (std::size_t c = 0; c < xv.dim(0); ++c)
        {
            // Ties route the gradient to the first maximal position.
            std::size_t best = 0;
            for (std::size_t i = 1; i < n; ++i)
            {
                if (xv[c * n + i] > xv[c * n + best])
                {
                    best = i;
                }
            }
            dx[c * n + best] = g[c];
        }
        return std::vector<Tensor>{dx};
    });
}

Var flatten_spatial(const Var& x)
{
    Tape& tape = common_tape({&x});
    const Shape shape = x.shape();
    return tape.record(flatten_spatial(x.value()), {x}, [shape](const Tensor& g) {
        return std::vector<Tensor>{g.reshaped(shape)};
    });
}

Var unflatten_spatial(const Var& y, std::size_t height, std::size_t width)
{
    Tape& tape = common_tape({&y});
    const Shape shape = y.shape();
    return tape.record(unflatten_spatial(y.value(), height, width), {y}, [shape](const Tensor& g) {
        return std::vector<Tensor>{g.reshaped(shape)};
    });
}

Var elementwise(ElementwiseOp op, const Var& a, const Var& b)
{
    Tape& tape = common_tape({&a, &b});
    const Tensor av = a.value(), bv = b.value();
    const bool broadcast = av.shape() != bv.shape();
    return tape.record(elementwise(op, av, bv), {a, b}, [op, av, bv, broadcast](const Tensor& g) {
        if (op == ElementwiseOp::add)
        {
            return std::vector<Tensor>{g, broadcast ? reduce_spatial(g) : g};
        }
        Tensor db = mul(g, av);
        return std::vector<Tensor>{mul(g, bv), broadcast ? reduce_spatial(db) : db};
    });
}

Var scale(const Var& x, const Var& s)
{
    Tape& tape = common_tape({&x, &s});
    const Tensor xv = x.value(), sv = s.value();
    return tape.record(scale(xv, sv), {x, s}, [xv, sv](const Tensor& g) {
        return std::vector<Tensor>{scale(g, sv), Tensor(sv.shape(), static_cast<float>(sum(mul(g, xv))))};
    });
}

Var residual_add(const Var& x, const Var& s, const Var& y)
{
    Tape& tape = common_tape({&x, &s, &y});
    const Tensor sv = s.value(), yv = y.value();
    return tape.record(residual_add(x.value(), sv, yv), {x, s, y}, [sv, yv](const Tensor& g) {
        return std::vector<Tensor>{g, Tensor(sv.shape(), static_cast<float>(sum(mul(g, yv)))), scale(g, sv)};
    });
}

Var concat_channels(const Var& a, const Var& b)
{
    Tape& tape = common_tape({&a, &b});
    const std::size_t ca = a.shape()[0], cb = b.shape()[0];
    return tape.record(concat_channels(a.value(), b.value()), {a, b}, [ca, cb](const Tensor& g) {
        const std::size_t h = g.dim(1), w = g.dim(2), split = ca * h * w;
        std::vector<float> first(g.values().begin(), g.values().begin() + static_cast<std::ptrdiff_t>(split));
        std::vector<float> second(g.values().begin() + static_cast<std::ptrdiff_t>(split), g.values().end());
        return std::vector<Tensor>{Tensor({ca, h, w}, std::move(first)), Tensor({cb, h, w}, std::move(second))};
    });
}

} // namespace nrenet
