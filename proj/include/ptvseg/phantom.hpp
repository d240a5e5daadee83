#pragma once

#include "ptvseg/dataprep.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace ptvseg {

/// Synthetic CT-like patients with procedurally known targets. The target mask is the union of
/// "bone" ellipses dilated by bone_margin_mm and an "organ" blob dilated by organ_margin_mm.
struct PhantomSpec
{
    std::uint64_t seed = 0;
    std::size_t patients = 100;
    std::size_t min_slices = 20;
    std::size_t max_slices = 20;
    std::size_t size = 64;                             // rows = cols
    std::array<double, 3> spacing_mm{5.0, 1.2, 1.2};   // z, y, x
    double bone_margin_mm = 2.0;
    double organ_margin_mm = 5.0;
    double noise_hu = 8.0;

    void validate() const;
};

/// In-plane dilation of a [rows, cols] mask by a Euclidean disc: offset (dy, dx) belongs to the
/// structuring element iff (dy*sy)^2 + (dx*sx)^2 <= radius^2.
std::vector<std::uint8_t> dilate_mask(std::span<const std::uint8_t> mask, std::size_t rows, std::size_t cols,
                                      double radius_mm, double spacing_y_mm, double spacing_x_mm);

/// Slice-wise dilation of a volume using its in-plane spacing.
BinaryVolume dilate_volume(const BinaryVolume& volume, double radius_mm);

/// Fully determined by (spec.seed, index). Patient ids are "P" + zero-padded index and
/// acquisition dates are 2015-01-01 plus `index` days.
PatientRecord generate_patient(const PhantomSpec& spec, std::size_t index);

std::vector<PatientRecord> generate_dataset(const PhantomSpec& spec);

}  // namespace ptvseg
