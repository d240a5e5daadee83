#pragma once

#include "ptvseg/metrics.hpp"
#include "ptvseg/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptvseg {

inline constexpr int kHuMin = -1024;
inline constexpr int kHuMax = 3071;
inline constexpr int kWindowLow = -160;
inline constexpr int kWindowHigh = 240;

/// Clamp to [-160, 240] HU, then round((hu + 160) * 255 / 400) with halves rounded up.
std::uint8_t window_hu(int hu);

struct HuSlice
{
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::int16_t> hu;
    double z_mm = 0.0;

    friend bool operator==(const HuSlice&, const HuSlice&) = default;
};

std::vector<std::uint8_t> window_slice(const HuSlice& slice);

/// 8-bit windowed pixels scaled to [0, 1] as a [1, rows, cols] tensor.
Tensor to_model_input(std::span<const std::uint8_t> windowed, std::size_t rows, std::size_t cols);

/// Pixel (r, c) has its center at (origin_x + c * spacing_x, origin_y + r * spacing_y) mm.
struct SliceGeometry
{
    std::size_t rows = 0;
    std::size_t cols = 0;
    double origin_x_mm = 0.0;
    double origin_y_mm = 0.0;
    double spacing_x_mm = 1.0;
    double spacing_y_mm = 1.0;
};

/// Closed polygon of (x_mm, y_mm) vertices on one slice.
struct ContourPolygon
{
    std::vector<std::array<double, 2>> vertices;

    double signed_area() const;
};

struct RasterResult
{
    std::vector<std::uint8_t> mask;
    std::vector<std::string> warnings;
};

/// Even-odd scanline fill evaluated at pixel centers. Several polygons on one slice combine by
/// parity, so a polygon nested inside another cuts a hole. Degenerate polygons (fewer than 3
/// vertices or zero area) contribute nothing and add a warning.
RasterResult rasterize_contours(std::span<const ContourPolygon> polygons, const SliceGeometry& geometry);
RasterResult rasterize_contour(const ContourPolygon& polygon, const SliceGeometry& geometry);

struct PatientRecord
{
    std::string id;
    std::string acquisition_date;        // YYYY-MM-DD
    std::array<double, 3> spacing_mm{};  // z, y, x
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<HuSlice> slices;         // ascending z
    BinaryVolume mask;                   // [slices, rows, cols]

    friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

class DatasetError : public std::runtime_error
{
public:
    enum class Kind { MissingFile, ShapeMismatch, MalformedManifest, InvalidValue, Io };

    DatasetError(Kind kind, std::filesystem::path path, const std::string& message);

    Kind kind() const { return kind_; }
    const std::filesystem::path& path() const { return path_; }

private:
    Kind kind_;
    std::filesystem::path path_;
};

struct LoadedDataset
{
    std::vector<PatientRecord> patients;  // sorted by id
    std::vector<std::string> warnings;
};

inline constexpr std::size_t kTypicalMinSlices = 164;
inline constexpr std::size_t kTypicalMaxSlices = 534;

/// Reads a manifest and every file it references, validating record invariants.
LoadedDataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes manifest.json, images/*.hu16 and masks/*.u8 under `directory`; returns the manifest path.
std::filesystem::path write_dataset(std::span<const PatientRecord> patients, const std::filesystem::path& directory);

/// Checks the record invariants that do not involve files; throws DatasetError.
void validate_record(const PatientRecord& record);

bool is_iso_date(const std::string& text);

/// Raw little-endian int16 / uint8 image I/O used by the dataset format.
std::vector<std::int16_t> read_hu_file(const std::filesystem::path& path, std::size_t expected_pixels);
void write_hu_file(const std::filesystem::path& path, std::span<const std::int16_t> pixels);
std::vector<std::uint8_t> read_u8_file(const std::filesystem::path& path, std::size_t expected_pixels);
void write_u8_file(const std::filesystem::path& path, std::span<const std::uint8_t> pixels);

struct PrepSummary
{
    std::filesystem::path manifest;
    std::size_t patients = 0;
    std::size_t slices = 0;
    std::size_t rasterized_slices = 0;
    std::vector<std::string> warnings;
};

/// Converter boundary: reads a manifest whose slices carry either a `mask` file or inline
/// `contours` ([[x_mm, y_mm], ...] polygons, rasterized against the patient's `origin_mm`),
/// and writes a model-ready dataset: the standard layout plus an 8-bit windowed copy of every
/// slice under windowed/ referenced by `image_u8`.
PrepSummary prepare_dataset(const std::filesystem::path& input_manifest, const std::filesystem::path& out_directory);

}  // namespace ptvseg
