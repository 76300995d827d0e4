#include "nrenet/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <optional>

namespace nrenet
{

DepthMap::DepthMap(std::size_t w, std::size_t h) : width(w), height(h), depth(w * h, 0.0f), valid(w * h, 0) {}

DepthMap DepthMap::from_tensor(const Tensor& t)
{
    if (t.rank() != 2)
    {
        throw ShapeError("depth map must be a rank-2 (H x W) tensor, got " + to_string(t.shape()));
    }
    DepthMap d(t.dim(1), t.dim(0));
    for (std::size_t i = 0; i < t.numel(); ++i)
    {
        d.depth[i] = t[i];
        d.valid[i] = std::isfinite(t[i]) && t[i] > 0.0f;
    }
    return d;
}

Tensor DepthMap::to_tensor() const
{
    Tensor t({height, width});
    for (std::size_t i = 0; i < depth.size(); ++i)
    {
        t[i] = valid[i] ? depth[i] : std::nanf("");
    }
    return t;
}

NormalMap::NormalMap(std::size_t w, std::size_t h)
    : width(w), height(h), normal(w * h, Eigen::Vector3f::Zero()), valid(w * h, 0)
{
}

std::size_t NormalMap::valid_count() const
{
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

NormalMap NormalMap::from_tensor(const Tensor& t)
{
    if (t.rank() != 3 || t.dim(0) != 3)
    {
        throw ShapeError("normal map must be a 3 x H x W tensor, got " + to_string(t.shape()));
    }
    NormalMap n(t.dim(2), t.dim(1));
    const std::size_t plane = n.width * n.height;
    for (std::size_t i = 0; i < plane; ++i)
    {
        const Eigen::Vector3f v(t[i], t[plane + i], t[2 * plane + i]);
        n.valid[i] = v.allFinite();
        n.normal[i] = n.valid[i] ? v : Eigen::Vector3f::Zero();
    }
    return n;
}

Tensor NormalMap::to_tensor() const
{
    const std::size_t plane = width * height;
    Tensor t({3, height, width});
    for (std::size_t i = 0; i < plane; ++i)
    {
        for (std::size_t k = 0; k < 3; ++k)
        {
            t[k * plane + i] = valid[i] ? normal[i][static_cast<Eigen::Index>(k)] : std::nanf("");
        }
    }
    return t;
}

namespace
{

/// Derivative along one axis from the centre sample and its two neighbours
/// (nullopt where a neighbour is missing or invalid).
std::optional<double> axis_derivative(double centre, std::optional<double> prev, std::optional<double> next)
{
    if (prev && next)
    {
        return (*next - *prev) / 2.0;
    }
    if (next)
    {
        return *next - centre;
    }
    if (prev)
    {
        return centre - *prev;
    }
    return std::nullopt;
}

} // namespace

NormalMap depth_to_normals(const DepthMap& d)
{
    if (d.depth.size() != d.width * d.height || d.valid.size() != d.depth.size())
    {
        throw ShapeError("depth map buffers do not match its extents");
    }
    NormalMap out(d.width, d.height);
    const auto sample = [&d](long u, long v) -> std::optional<double> {
        if (u < 0 || v < 0 || u >= static_cast<long>(d.width) || v >= static_cast<long>(d.height))
        {
            return std::nullopt;
        }
        const std::size_t i = d.index(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
        if (!d.valid[i])
        {
            return std::nullopt;
        }
        return static_cast<double>(d.depth[i]);
    };

    for (std::size_t v = 0; v < d.height; ++v)
    {
        for (std::size_t u = 0; u < d.width; ++u)
        {
            const auto iu = static_cast<long>(u), iv = static_cast<long>(v);
            const auto centre = sample(iu, iv);
            if (!centre)
            {
                continue;
            }
            const auto du = axis_derivative(*centre, sample(iu - 1, iv), sample(iu + 1, iv));
            const auto dv = axis_derivative(*centre, sample(iu, iv - 1), sample(iu, iv + 1));
            if (!du || !dv)
            {
                continue;
            }
            const Eigen::Vector3d n = Eigen::Vector3d(*du, *dv, 1.0).normalized();
            const std::size_t i = d.index(u, v);
            out.normal[i] = n.cast<float>();
            out.valid[i] = 1;
        }
    }
    return out;
}

AngularLoss angular_loss(const NormalMap& pred, const NormalMap& gt)
{
    if (pred.width != gt.width || pred.height != gt.height)
    {
        throw ShapeError("angular_loss: normal maps differ in extents");
    }
    AngularLoss loss;
    loss.per_pixel.assign(pred.normal.size(), std::nan(""));
    for (std::size_t i = 0; i < pred.normal.size(); ++i)
    {
        if (!pred.valid[i] || !gt.valid[i])
        {
            continue;
        }
        // atan2 form: exact 0 for identical vectors whose float norm is not exactly 1.
        const Eigen::Vector3d a = pred.normal[i].cast<double>(), b = gt.normal[i].cast<double>();
        const double angle = std::atan2(a.cross(b).norm(), a.dot(b));
        loss.per_pixel[i] = angle;
        loss.sum += angle;
        ++loss.count;
    }
    if (loss.count == 0)
    {
        throw EmptyDomainError("angular_loss: no jointly valid pixels");
    }
    loss.mean = loss.sum / static_cast<double>(loss.count);
    return loss;
}

} // namespace nrenet
