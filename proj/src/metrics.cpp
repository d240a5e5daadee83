#include "ptvseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ptvseg {

BinaryVolume::BinaryVolume(std::size_t d, std::size_t h, std::size_t w, std::array<double, 3> spacing)
    : depth(d), height(h), width(w), voxels(d * h * w, 0), spacing_mm(spacing)
{
}

std::size_t BinaryVolume::count() const
{
    return static_cast<std::size_t>(std::count(voxels.begin(), voxels.end(), std::uint8_t{1}));
}

void BinaryVolume::validate() const
{
    if (voxels.size() != depth * height * width)
        throw std::invalid_argument("binary volume: " + std::to_string(voxels.size()) + " voxels for extent " +
                                    std::to_string(depth) + "x" + std::to_string(height) + "x" + std::to_string(width));
    for (double s : spacing_mm)
        if (!(s > 0.0) || !std::isfinite(s))
            throw std::invalid_argument("binary volume: spacing must be positive");
    for (auto v : voxels)
        if (v > 1)
            throw std::invalid_argument("binary volume: voxel value " + std::to_string(v) + " is not binary");
}

std::vector<std::uint8_t> binarize(std::span<const double> probabilities, double threshold)
{
    std::vector<std::uint8_t> out(probabilities.size());
    for (std::size_t i = 0; i < probabilities.size(); ++i)
        out[i] = probabilities[i] >= threshold ? 1 : 0;
    return out;
}

namespace {

void require_same_extent(const BinaryVolume& x, const BinaryVolume& y, const char* what)
{
    if (x.depth != y.depth || x.height != y.height || x.width != y.width)
        throw ShapeError(std::string(what) + ": volume extents differ (" + std::to_string(x.depth) + "x" +
                         std::to_string(x.height) + "x" + std::to_string(x.width) + " vs " + std::to_string(y.depth) +
                         "x" + std::to_string(y.height) + "x" + std::to_string(y.width) + ")");
}

}  // namespace

double dsc(const BinaryVolume& x, const BinaryVolume& y)
{
    require_same_extent(x, y, "dsc");
    std::size_t both = 0, nx = 0, ny = 0;
    for (std::size_t i = 0; i < x.voxels.size(); ++i)
    {
        nx += x.voxels[i];
        ny += y.voxels[i];
        both += x.voxels[i] & y.voxels[i];
    }
    if (nx + ny == 0)
        return 1.0;
    return 2.0 * static_cast<double>(both) / static_cast<double>(nx + ny);
}

SurfaceSet extract_surface(const BinaryVolume& v)
{
    SurfaceSet s;
    const auto fg = [&](std::ptrdiff_t z, std::ptrdiff_t y, std::ptrdiff_t x) {
        if (z < 0 || y < 0 || x < 0 || z >= static_cast<std::ptrdiff_t>(v.depth) ||
            y >= static_cast<std::ptrdiff_t>(v.height) || x >= static_cast<std::ptrdiff_t>(v.width))
            return false;
        return v.at(static_cast<std::size_t>(z), static_cast<std::size_t>(y), static_cast<std::size_t>(x)) != 0;
    };
    for (std::size_t z = 0; z < v.depth; ++z)
        for (std::size_t y = 0; y < v.height; ++y)
            for (std::size_t x = 0; x < v.width; ++x)
            {
                if (!v.at(z, y, x))
                    continue;
                const auto iz = static_cast<std::ptrdiff_t>(z), iy = static_cast<std::ptrdiff_t>(y),
                           ix = static_cast<std::ptrdiff_t>(x);
                const bool interior = fg(iz - 1, iy, ix) && fg(iz + 1, iy, ix) && fg(iz, iy - 1, ix) &&
                                      fg(iz, iy + 1, ix) && fg(iz, iy, ix - 1) && fg(iz, iy, ix + 1);
                if (!interior)
                    s.points.push_back({static_cast<double>(z) * v.spacing_mm[0], static_cast<double>(y) * v.spacing_mm[1],
                                        static_cast<double>(x) * v.spacing_mm[2]});
            }
    return s;
}

double point_distance(const std::array<double, 3>& a, const std::array<double, 3>& b)
{
    const double dz = a[0] - b[0];
    const double dy = a[1] - b[1];
    const double dx = a[2] - b[2];
    return std::sqrt(dz * dz + dy * dy + dx * dx);
}

namespace {
constexpr std::uint32_t kLeafSize = 8;
// Relative slack on the pruning bound so rounding in point_distance can never
// hide a candidate that ties or beats the current best.
constexpr double kPruneSlack = 1e-12;
}  // namespace

SurfaceIndex::SurfaceIndex(const SurfaceSet& surface) : points_(surface.points)
{
    if (points_.empty())
        throw std::invalid_argument("SurfaceIndex: empty surface");
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t SurfaceIndex::build(std::uint32_t begin, std::uint32_t end)
{
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize)
        return id;

    std::array<double, 3> lo{points_[begin]}, hi{points_[begin]};
    for (std::uint32_t i = begin; i < end; ++i)
        for (int a = 0; a < 3; ++a)
        {
            lo[a] = std::min(lo[a], points_[i][a]);
            hi[a] = std::max(hi[a], points_[i][a]);
        }
    std::uint8_t axis = 0;
    for (std::uint8_t a = 1; a < 3; ++a)
        if (hi[a] - lo[a] > hi[axis] - lo[axis])
            axis = a;
    if (hi[axis] == lo[axis])
        return id;  // all points coincide

    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(points_.begin() + begin, points_.begin() + mid, points_.begin() + end,
                     [axis](const auto& p, const auto& q) { return p[axis] < q[axis]; });
    const double split = points_[mid][axis];
    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    nodes_[static_cast<std::size_t>(id)].axis = axis;
    nodes_[static_cast<std::size_t>(id)].split = split;
    nodes_[static_cast<std::size_t>(id)].left = left;
    nodes_[static_cast<std::size_t>(id)].right = right;
    return id;
}

void SurfaceIndex::search(std::int32_t node_id, const std::array<double, 3>& q, double& best) const
{
    const Node& node = nodes_[static_cast<std::size_t>(node_id)];
    if (node.left < 0)
    {
        for (std::uint32_t i = node.begin; i < node.end; ++i)
            best = std::min(best, point_distance(q, points_[i]));
        return;
    }
    // Left holds coordinates <= split, right holds coordinates >= split.
    const double diff = q[node.axis] - node.split;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;
    search(near, q, best);
    if (std::abs(diff) <= best * (1.0 + kPruneSlack))
        search(far, q, best);
}

double SurfaceIndex::nearest_distance(const std::array<double, 3>& query) const
{
    double best = std::numeric_limits<double>::infinity();
    search(0, query, best);
    return best;
}

std::vector<double> directed_distances(const SurfaceSet& from, const SurfaceSet& to)
{
    std::vector<double> out;
    if (from.empty() || to.empty())
        return out;
    const SurfaceIndex index(to);
    out.reserve(from.size());
    for (const auto& p : from.points)
        out.push_back(index.nearest_distance(p));
    return out;
}

std::optional<double> hausdorff(const SurfaceSet& sx, const SurfaceSet& sy)
{
    if (sx.empty() || sy.empty())
        return std::nullopt;
    const auto xy = directed_distances(sx, sy);
    const auto yx = directed_distances(sy, sx);
    return std::max(*std::max_element(xy.begin(), xy.end()), *std::max_element(yx.begin(), yx.end()));
}

double percentile_linear(std::vector<double> values, double q)
{
    if (values.empty())
        throw std::invalid_argument("percentile_linear: no values");
    if (!(q >= 0.0 && q <= 1.0))
        throw std::invalid_argument("percentile_linear: q must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::optional<double> hd95(const SurfaceSet& sx, const SurfaceSet& sy)
{
    if (sx.empty() || sy.empty())
        return std::nullopt;
    auto pooled = directed_distances(sx, sy);
    const auto yx = directed_distances(sy, sx);
    pooled.insert(pooled.end(), yx.begin(), yx.end());
    return percentile_linear(std::move(pooled), 0.95);
}

VolumeMetrics evaluate_volume(const BinaryVolume& prediction, const BinaryVolume& truth)
{
    VolumeMetrics m;
    m.dsc = dsc(prediction, truth);
    const SurfaceSet sp = extract_surface(prediction);
    const SurfaceSet st = extract_surface(truth);
    if (sp.empty() || st.empty())
        return m;
    auto pooled = directed_distances(sp, st);
    const auto back = directed_distances(st, sp);
    pooled.insert(pooled.end(), back.begin(), back.end());
    m.hd_mm = *std::max_element(pooled.begin(), pooled.end());
    m.hd95_mm = percentile_linear(std::move(pooled), 0.95);
    return m;
}

std::vector<VolumeMetrics> evaluate_slices(const BinaryVolume& prediction, const BinaryVolume& truth)
{
    require_same_extent(prediction, truth, "evaluate_slices");
    std::vector<VolumeMetrics> out;
    const std::size_t plane = prediction.height * prediction.width;
    for (std::size_t z = 0; z < prediction.depth; ++z)
    {
        BinaryVolume p(1, prediction.height, prediction.width, prediction.spacing_mm);
        BinaryVolume t(1, truth.height, truth.width, truth.spacing_mm);
        std::copy_n(prediction.voxels.begin() + static_cast<std::ptrdiff_t>(z * plane), plane, p.voxels.begin());
        std::copy_n(truth.voxels.begin() + static_cast<std::ptrdiff_t>(z * plane), plane, t.voxels.begin());
        out.push_back(evaluate_volume(p, t));
    }
    return out;
}

}  // namespace ptvseg
