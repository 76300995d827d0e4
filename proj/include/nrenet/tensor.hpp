#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nrenet
{

/// Thrown when operand extents are incompatible with an operation.
class ShapeError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<MatrixRM>;
using ConstMatrixMap = Eigen::Map<const MatrixRM>;

/// Dense rank-1..4 float array, row-major with the last axis fastest.
///
/// Feature maps use (C, H, W). A default-constructed tensor is empty
/// (rank 0) and only serves as a placeholder; every operation rejects it.
class Tensor
{
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
    static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0f); }
    static Tensor full(Shape shape, float value) { return Tensor(std::move(shape), value); }
    static Tensor scalar(float value) { return Tensor({1}, value); }
    static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return shape_.empty(); }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }
    const std::vector<float>& values() const noexcept { return data_; }

    float operator[](std::size_t i) const { return data_[i]; }
    float& operator[](std::size_t i) { return data_[i]; }

    float at(std::size_t i, std::size_t j) const;
    float at(std::size_t c, std::size_t h, std::size_t w) const;
    float& at(std::size_t i, std::size_t j);
    float& at(std::size_t c, std::size_t h, std::size_t w);

    /// Row-major matrix view; rows * cols must equal numel().
    ConstMatrixMap as_matrix(std::size_t rows, std::size_t cols) const;
    MatrixMap as_matrix(std::size_t rows, std::size_t cols);

    Tensor reshaped(Shape shape) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

std::size_t shape_numel(const Shape& shape);
void validate_shape(const Shape& shape);

/// True if every element is finite.
bool all_finite(const Tensor& t);

/// Largest |a - b| over matching elements; ShapeError on mismatch.
float max_abs_diff(const Tensor& a, const Tensor& b);

/// Sum of all elements, accumulated in double.
double sum(const Tensor& t);

// ---------------------------------------------------------------------------
// Forward primitives. All are pure: inputs are never modified.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor softmax_rows(const Tensor& x);

Tensor conv1x1(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// Same-size 3x3 cross-correlation, stride 1, zero padding 1.
Tensor conv3x3(const Tensor& x, const Tensor& weight, const Tensor& bias);

inline constexpr float kGroupNormEps = 1e-5f;

Tensor group_norm(const Tensor& x,
                  std::size_t groups,
                  const Tensor& gamma,
                  const Tensor& beta,
                  float eps = kGroupNormEps);

Tensor sigmoid(const Tensor& x);
Tensor global_avg_pool(const Tensor& x);
Tensor global_max_pool(const Tensor& x);

Tensor flatten_spatial(const Tensor& x);
Tensor unflatten_spatial(const Tensor& y, std::size_t height, std::size_t width);

enum class ElementwiseOp
{
    add,
    mul
};

/// Elementwise add/mul. Shapes must match, or `b` is C x 1 x 1 against a
/// C x H x W `a` (channel broadcast). No other broadcasting.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::add, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::mul, a, b); }

/// x * s for a one-element tensor s.
Tensor scale(const Tensor& x, const Tensor& s);

/// x + s * y. Where the product is exactly zero the element of x is kept
/// unchanged, so s == 0 returns x bit for bit (signed zeros included).
Tensor residual_add(const Tensor& x, const Tensor& s, const Tensor& y);

/// Concatenate C_a x H x W and C_b x H x W along channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);

namespace detail
{
/// Unfold a C x H x W tensor into (C*9) x (H*W) patch columns, zero padded.
Tensor im2col3x3(const Tensor& x);
/// Adjoint of im2col3x3: scatter-add patch columns back to C x H x W.
Tensor col2im3x3(const Tensor& cols, std::size_t channels, std::size_t height, std::size_t width);
void check_finite(const Tensor& t, const char* op);
} // namespace detail

} // namespace nrenet
