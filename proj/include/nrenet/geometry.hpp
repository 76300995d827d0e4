#pragma once

#include "nrenet/tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace nrenet
{

/// Raised when a reduction has no jointly valid pixels to work on.
class EmptyDomainError : public std::domain_error
{
public:
    using std::domain_error::domain_error;
};

/// Per-pixel depth (meters) with validity mask. Valid pixels hold finite
/// depth > 0.
struct DepthMap
{
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> depth;
    std::vector<std::uint8_t> valid;

    DepthMap() = default;
    DepthMap(std::size_t width, std::size_t height);

    std::size_t index(std::size_t u, std::size_t v) const { return v * width + u; }

    /// H x W tensor; NaN, infinite and non-positive entries become invalid.
    static DepthMap from_tensor(const Tensor& t);
    /// H x W tensor with NaN at invalid pixels.
    Tensor to_tensor() const;
};

/// Per-pixel unit normal (n_u, n_v, n_z) with validity mask.
struct NormalMap
{
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<Eigen::Vector3f> normal;
    std::vector<std::uint8_t> valid;

    NormalMap() = default;
    NormalMap(std::size_t width, std::size_t height);

    std::size_t index(std::size_t u, std::size_t v) const { return v * width + u; }
    std::size_t valid_count() const;

    /// 3 x H x W tensor; a pixel with any non-finite component is invalid.
    static NormalMap from_tensor(const Tensor& t);
    /// 3 x H x W tensor with NaN at invalid pixels.
    Tensor to_tensor() const;
};

/// n = (dD/du, dD/dv, 1) / |.| per pixel, u along columns and v along rows.
///
/// Central differences where both neighbours are valid, one-sided otherwise.
/// A pixel is valid iff it is valid itself and has at least one difference
/// along each axis. Gradients are in depth units per pixel.
NormalMap depth_to_normals(const DepthMap& depth);

struct AngularLoss
{
    double sum = 0.0;    ///< radians, summed over jointly valid pixels
    double mean = 0.0;
    std::size_t count = 0;
    std::vector<double> per_pixel; ///< NaN where either map is invalid
};

/// Sum of the angle between n_pred and n_gt over jointly valid pixels,
/// computed as atan2(|a x b|, a . b) (arccos of the dot product for unit vectors).
/// Throws ShapeError on differing extents, EmptyDomainError if no pixel is
/// valid in both maps.
AngularLoss angular_loss(const NormalMap& pred, const NormalMap& gt);

/// 8-bit interleaved RGB raster.
struct RgbImage
{
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;
};

/// channel = round((component + 1) / 2 * 255); invalid pixels are (0, 0, 0).
RgbImage encode_normal_png(const NormalMap& normals);
/// Inverse mapping followed by renormalisation; (0, 0, 0) decodes invalid.
NormalMap decode_normal_png(const RgbImage& image);

void write_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_png(const std::filesystem::path& path);

} // namespace nrenet
