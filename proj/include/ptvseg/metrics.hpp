#pragma once

#include "ptvseg/tensor.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace ptvseg {

/// Binary voxel grid [depth, height, width] with physical spacing (z, y, x) in mm.
struct BinaryVolume
{
    std::size_t depth = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> voxels;
    std::array<double, 3> spacing_mm{1.0, 1.0, 1.0};

    BinaryVolume() = default;
    BinaryVolume(std::size_t d, std::size_t h, std::size_t w, std::array<double, 3> spacing);

    std::size_t size() const { return voxels.size(); }
    std::size_t index(std::size_t z, std::size_t y, std::size_t x) const { return (z * height + y) * width + x; }
    std::uint8_t at(std::size_t z, std::size_t y, std::size_t x) const { return voxels[index(z, y, x)]; }
    std::uint8_t& at(std::size_t z, std::size_t y, std::size_t x) { return voxels[index(z, y, x)]; }
    std::size_t count() const;

    /// Checks binary values, positive spacing and the voxel count; throws std::invalid_argument.
    void validate() const;

    friend bool operator==(const BinaryVolume&, const BinaryVolume&) = default;
};

/// Voxel value 1 iff p >= threshold.
std::vector<std::uint8_t> binarize(std::span<const double> probabilities, double threshold = 0.5);

/// Boundary voxel positions in mm (index * spacing), ordered by (z, y, x) scan.
struct SurfaceSet
{
    std::vector<std::array<double, 3>> points;

    bool empty() const { return points.empty(); }
    std::size_t size() const { return points.size(); }
};

/// 2|X n Y| / (|X| + |Y|); defined as 1 when both volumes are empty.
double dsc(const BinaryVolume& x, const BinaryVolume& y);

/// Foreground voxels with at least one background or out-of-bounds 6-neighbour.
SurfaceSet extract_surface(const BinaryVolume& v);

/// Euclidean distance between two surface points, sqrt((dz^2 + dy^2) + dx^2).
double point_distance(const std::array<double, 3>& a, const std::array<double, 3>& b);

/// Nearest-neighbour index over a surface, exact in the sense that the returned distance is the
/// minimum of point_distance over all members (the pruning bound is conservative).
class SurfaceIndex
{
public:
    explicit SurfaceIndex(const SurfaceSet& surface);

    double nearest_distance(const std::array<double, 3>& query) const;

private:
    struct Node
    {
        std::uint32_t begin, end;      // point range
        std::int32_t left = -1, right = -1;
        std::uint8_t axis = 0;
        double split = 0.0;
    };

    std::int32_t build(std::uint32_t begin, std::uint32_t end);
    void search(std::int32_t node, const std::array<double, 3>& q, double& best) const;

    std::vector<std::array<double, 3>> points_;
    std::vector<Node> nodes_;
};

/// Directed nearest-surface distances d(x, S_to) for every x in `from`.
std::vector<double> directed_distances(const SurfaceSet& from, const SurfaceSet& to);

/// Symmetric Hausdorff distance in mm; nullopt when either surface is empty.
std::optional<double> hausdorff(const SurfaceSet& sx, const SurfaceSet& sy);

/// Inclusive linear-interpolation percentile (q in [0, 1]) of unsorted values.
double percentile_linear(std::vector<double> values, double q);

/// 95th percentile of the pooled directed distances {d(x,S_Y)} u {d(y,S_X)}; nullopt on empty surfaces.
std::optional<double> hd95(const SurfaceSet& sx, const SurfaceSet& sy);

struct VolumeMetrics
{
    double dsc = 0.0;
    std::optional<double> hd95_mm;
    std::optional<double> hd_mm;
};

/// DSC, HD95 and HD of prediction against ground truth on the full 3D volume.
VolumeMetrics evaluate_volume(const BinaryVolume& prediction, const BinaryVolume& truth);

/// Diagnostic per-slice (2D) metrics; each slice is treated as a one-slice volume.
std::vector<VolumeMetrics> evaluate_slices(const BinaryVolume& prediction, const BinaryVolume& truth);

}  // namespace ptvseg
