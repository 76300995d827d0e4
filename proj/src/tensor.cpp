#include "nrenet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace nrenet
{

namespace
{

void require_rank(const Tensor& t, std::size_t rank, const char* op)
{
    if (t.rank() != rank)
    {
        std::ostringstream os;
        os << op << ": expected rank " << rank << " tensor, got shape " << to_string(t.shape());
        throw ShapeError(os.str());
    }
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b)
{
    std::ostringstream os;
    os << op << ": incompatible shapes " << to_string(a.shape()) << " and " << to_string(b.shape());
    throw ShapeError(os.str());
}

std::size_t spatial(const Tensor& x) { return x.dim(1) * x.dim(2); }

float sigmoid_scalar(float v)
{
    // Branching on sign keeps exp() argument non-positive.
    if (v >= 0.0f)
    {
        return 1.0f / (1.0f + std::exp(-v));
    }
    const float e = std::exp(v);
    return e / (1.0f + e);
}

} // namespace

std::string to_string(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
    {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

void validate_shape(const Shape& shape)
{
    if (shape.empty() || shape.size() > 4)
    {
        throw ShapeError("tensor rank must be 1..4, got shape " + to_string(shape));
    }
    if (std::any_of(shape.begin(), shape.end(), [](std::size_t e) { return e == 0; }))
    {
        throw ShapeError("tensor extents must be >= 1, got shape " + to_string(shape));
    }
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape))
{
    validate_shape(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data))
{
    validate_shape(shape_);
    if (data_.size() != shape_numel(shape_))
    {
        std::ostringstream os;
        os << "tensor data length " << data_.size() << " does not match shape " << to_string(shape_);
        throw ShapeError(os.str());
    }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<float>> rows)
{
    const std::size_t m = rows.size();
    const std::size_t n = m ? rows.begin()->size() : 0;
    std::vector<float> data;
    data.reserve(m * n);
    for (const auto& row : rows)
    {
        if (row.size() != n)
        {
            throw ShapeError("ragged matrix literal");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({m, n}, std::move(data));
}

float Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
float& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }

float Tensor::at(std::size_t c, std::size_t h, std::size_t w) const
{
    return data_[(c * shape_[1] + h) * shape_[2] + w];
}

float& Tensor::at(std::size_t c, std::size_t h, std::size_t w)
{
    return data_[(c * shape_[1] + h) * shape_[2] + w];
}

ConstMatrixMap Tensor::as_matrix(std::size_t rows, std::size_t cols) const
{
    if (rows * cols != data_.size())
    {
        throw ShapeError("matrix view does not cover tensor " + to_string(shape_));
    }
    return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatrixMap Tensor::as_matrix(std::size_t rows, std::size_t cols)
{
    if (rows * cols != data_.size())
    {
        throw ShapeError("matrix view does not cover tensor " + to_string(shape_));
    }
    return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Tensor Tensor::reshaped(Shape shape) const
{
    validate_shape(shape);
    if (shape_numel(shape) != data_.size())
    {
        throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool all_finite(const Tensor& t)
{
    return std::all_of(t.values().begin(), t.values().end(), [](float v) { return std::isfinite(v); });
}

float max_abs_diff(const Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape())
    {
        mismatch("max_abs_diff", a, b);
    }
    float worst = 0.0f;
    for (std::size_t i = 0; i < a.numel(); ++i)
    {
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

double sum(const Tensor& t)
{
    double s = 0.0;
    for (float v : t.values())
    {
        s += v;
    }
    return s;
}

namespace detail
{

void check_finite([[maybe_unused]] const Tensor& t, [[maybe_unused]] const char* op)
{
#ifndef NDEBUG
    if (!all_finite(t))
    {
        throw std::domain_error(std::string(op) + ": produced a non-finite value");
    }
#endif
}

Tensor im2col3x3(const Tensor& x)
{
    const std::size_t channels = x.dim(0), height = x.dim(1), width = x.dim(2);
    const std::size_t n = height * width;
    Tensor cols({channels * 9, n});
    for (std::size_t c = 0; c < channels; ++c)
    {
        for (std::size_t k = 0; k < 9; ++k)
        {
            const long dy = static_cast<long>(k / 3) - 1;
            const long dx = static_cast<long>(k % 3) - 1;
            float* row = cols.data().data() + (c * 9 + k) * n;
            for (std::size_t h = 0; h < height; ++h)
            {
                const long sy = static_cast<long>(h) + dy;
                if (sy < 0 || sy >= static_cast<long>(height))
                {
                    continue;
                }
                for (std::size_t w = 0; w < width; ++w)
                {
                    const long sx = static_cast<long>(w) + dx;
                    if (sx < 0 || sx >= static_cast<long>(width))
                    {
                        continue;
                    }
                    row[h * width + w] = x.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                }
            }
        }
    }
    return cols;
}

Tensor col2im3x3(const Tensor& cols, std::size_t channels, std::size_t height, std::size_t width)
{
    const std::size_t n = height * width;
    Tensor x({channels, height, width});
    for (std::size_t c = 0; c < channels; ++c)
    {
        for (std::size_t k = 0; k < 9; ++k)
        {
            const long dy = static_cast<long>(k / 3) - 1;
            const long dx = static_cast<long>(k % 3) - 1;
            const float* row = cols.data().data() + (c * 9 + k) * n;
            for (std::size_t h = 0; h < height; ++h)
            {
                const long sy = static_cast<long>(h) + dy;
                if (sy < 0 || sy >= static_cast<long>(height))
                {
                    continue;
                }
                for (std::size_t w = 0; w < width; ++w)
                {
                    const long sx = static_cast<long>(w) + dx;
                    if (sx < 0 || sx >= static_cast<long>(width))
                    {
                        continue;
                    }
                    x.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) += row[h * width + w];
                }
            }
        }
    }
    return x;
}

} // namespace detail

Tensor matmul(const Tensor& a, const Tensor& b)
{
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    {
        mismatch("matmul", a, b);
    }
    Tensor out({a.dim(0), b.dim(1)});
    out.as_matrix(a.dim(0), b.dim(1)).noalias() = a.as_matrix(a.dim(0), a.dim(1)) * b.as_matrix(b.dim(0), b.dim(1));
    detail::check_finite(out, "matmul");
    return out;
}

Tensor transpose(const Tensor& x)
{
    require_rank(x, 2, "transpose");
    Tensor out({x.dim(1), x.dim(0)});
    out.as_matrix(x.dim(1), x.dim(0)) = x.as_matrix(x.dim(0), x.dim(1)).transpose();
    return out;
}

Tensor softmax_rows(const Tensor& x)
{
    require_rank(x, 2, "softmax_rows");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < rows; ++i)
    {
        const float* in = x.data().data() + i * cols;
        float* o = out.data().data() + i * cols;
        const float peak = *std::max_element(in, in + cols);
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j)
        {
            o[j] = std::exp(in[j] - peak);
            total += o[j];
        }
        const float inv = static_cast<float>(1.0 / total);
        for (std::size_t j = 0; j < cols; ++j)
        {
            o[j] *= inv;
        }
    }
    return out;
}

Tensor conv1x1(const Tensor& x, const Tensor& weight, const Tensor& bias)
{
    require_rank(x, 3, "conv1x1");
    require_rank(weight, 2, "conv1x1 weight");
    require_rank(bias, 1, "conv1x1 bias");
    const std::size_t c_in = x.dim(0), c_out = weight.dim(0), n = spatial(x);
    if (weight.dim(1) != c_in)
    {
        mismatch("conv1x1", x, weight);
    }
    if (bias.dim(0) != c_out)
    {
        mismatch("conv1x1 bias", weight, bias);
    }
    Tensor out({c_out, x.dim(1), x.dim(2)});
    auto o = out.as_matrix(c_out, n);
    o.noalias() = weight.as_matrix(c_out, c_in) * x.as_matrix(c_in, n);
    o.colwise() += Eigen::Map<const Eigen::VectorXf>(bias.data().data(), static_cast<Eigen::Index>(c_out));
    detail::check_finite(out, "conv1x1");
    return out;
}

Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias)
{
    require_rank(x, 3, "conv3x3");
    require_rank(weight, 4, "conv3x3 weight");
    require_rank(bias, 1, "conv3x3 bias");
    const std::size_t c_in = x.dim(0), c_out = weight.dim(0), n = spatial(x);
    if (weight.dim(1) != c_in || weight.dim(2) != 3 || weight.dim(3) != 3)
    {
        mismatch("conv3x3", x, weight);
    }
    if (bias.dim(0) != c_out)
    {
        mismatch("conv3x3 bias", weight, bias);
    }
    const Tensor cols = detail::im2col3x3(x);
    Tensor out({c_out, x.dim(1), x.dim(2)});
    auto o = out.as_matrix(c_out, n);
    o.noalias() = weight.as_matrix(c_out, c_in * 9) * cols.as_matrix(c_in * 9, n);
    o.colwise() += Eigen::Map<const Eigen::VectorXf>(bias.data().data(), static_cast<Eigen::Index>(c_out));
    detail::check_finite(out, "conv3x3");
    return out;
}

Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma, const Tensor& beta, float eps)
{
    require_rank(x, 3, "group_norm");
    const std::size_t channels = x.dim(0), n = spatial(x);
    if (groups == 0 || channels % groups != 0)
    {
        throw ShapeError("group_norm: " + std::to_string(groups) + " groups do not divide " +
                         std::to_string(channels) + " channels");
    }
    if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels})
    {
        mismatch("group_norm affine", gamma, beta);
    }
    if (!(eps > 0.0f))
    {
        throw std::invalid_argument("group_norm: eps must be positive");
    }
    const std::size_t per_group = channels / groups;
    const std::size_t count = per_group * n;
    Tensor out(x.shape());
    for (std::size_t g = 0; g < groups; ++g)
    {
        const float* in = x.data().data() + g * count;
        double mean = 0.0;
        for (std::size_t i = 0; i < count; ++i)
        {
            mean += in[i];
        }
        mean /= static_cast<double>(count);
        double var = 0.0;
        for (std::size_t i = 0; i < count; ++i)
        {
            const double d = in[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(count);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = g * per_group; c < (g + 1) * per_group; ++c)
        {
            const float* src = x.data().data() + c * n;
            float* dst = out.data().data() + c * n;
            for (std::size_t i = 0; i < n; ++i)
            {
                const auto normalized = static_cast<float>((src[i] - mean) * inv_std);
                dst[i] = gamma[c] * normalized + beta[c];
            }
        }
    }
    detail::check_finite(out, "group_norm");
    return out;
}

Tensor sigmoid(const Tensor& x)
{
    Tensor out(x.shape());
    std::transform(x.values().begin(), x.values().end(), out.data().begin(), sigmoid_scalar);
    return out;
}

Tensor global_avg_pool(const Tensor& x)
{
    require_rank(x, 3, "global_avg_pool");
    const std::size_t channels = x.dim(0), n = spatial(x);
    Tensor out({channels, 1, 1});
    for (std::size_t c = 0; c < channels; ++c)
    {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
        {
            s += x[c * n + i];
        }
        out[c] = static_cast<float>(s / static_cast<double>(n));
    }
    return out;
}

Tensor global_max_pool(const Tensor& x)
{
    require_rank(x, 3, "global_max_pool");
    const std::size_t channels = x.dim(0), n = spatial(x);
    Tensor out({channels, 1, 1});
    for (std::size_t c = 0; c < channels; ++c)
    {
        const float* row = x.data().data() + c * n;
        out[c] = *std::max_element(row, row + n);
    }
    return out;
}

Tensor flatten_spatial(const Tensor& x)
{
    require_rank(x, 3, "flatten_spatial");
    return x.reshaped({x.dim(0), spatial(x)});
}

Tensor unflatten_spatial(const Tensor& y, std::size_t height, std::size_t width)
{
    require_rank(y, 2, "unflatten_spatial");
    if (height == 0 || width == 0 || y.dim(1) != height * width)
    {
        std::ostringstream os;
        os << "unflatten_spatial: N = " << y.dim(1) << " is not " << height << " x " << width;
        throw ShapeError(os.str());
    }
    return y.reshaped({y.dim(0), height, width});
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b)
{
    const auto apply = [op](float l, float r) { return op == ElementwiseOp::add ? l + r : l * r; };
    if (a.shape() == b.shape())
    {
        Tensor out(a.shape());
        std::transform(a.values().begin(), a.values().end(), b.values().begin(), out.data().begin(), apply);
        return out;
    }
    const bool broadcast = a.rank() == 3 && b.rank() == 3 && b.dim(0) == a.dim(0) && b.dim(1) == 1 && b.dim(2) == 1;
    if (!broadcast)
    {
        mismatch(op == ElementwiseOp::add ? "elementwise add" : "elementwise mul", a, b);
    }
    const std::size_t n = spatial(a);
    Tensor out(a.shape());
    for (std::size_t c = 0; c < a.dim(0); ++c)
    {
        for (std::size_t i = 0; i < n; ++i)
        {
            out[c * n + i] = apply(a[c * n + i], b[c]);
        }
    }
    return out;
}

Tensor scale(const Tensor& x, const Tensor& s)
{
    if (s.numel() != 1)
    {
        mismatch("scale", x, s);
    }
    Tensor out(x.shape());
    const float k = s[0];
    std::transform(x.values().begin(), x.values().end(), out.data().begin(), [k](float v) { return v * k; });
    return out;
}

Tensor residual_add(const Tensor& x, const Tensor& s, const Tensor& y)
{
    if (s.numel() != 1)
    {
        mismatch("residual_add scale", y, s);
    }
    if (x.shape() != y.shape())
    {
        mismatch("residual_add", x, y);
    }
    Tensor out(x.shape());
    const float k = s[0];
    for (std::size_t i = 0; i < x.numel(); ++i)
    {
        const float term = k * y[i];
        out[i] = term == 0.0f ? x[i] : x[i] + term;
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b)
{
    require_rank(a, 3, "concat_channels");
    require_rank(b, 3, "concat_channels");
    if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    {
        mismatch("concat_channels", a, b);
    }
    std::vector<float> data;
    data.reserve(a.numel() + b.numel());
    data.insert(data.end(), a.values().begin(), a.values().end());
    data.insert(data.end(), b.values().begin(), b.values().end());
    return Tensor({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(data));
}

} // namespace nrenet
