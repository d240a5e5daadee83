#include "ptvseg/dataprep.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>

namespace ptvseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint8_t window_hu(int hu)
{
    const int clamped = std::clamp(hu, kWindowLow, kWindowHigh);
    // floor(v / 400 + 1/2) with v = (hu + 160) * 255, in integers.
    const int scaled = (clamped - kWindowLow) * 255;
    const int width = kWindowHigh - kWindowLow;
    return static_cast<std::uint8_t>((2 * scaled + width) / (2 * width));
}

std::vector<std::uint8_t> window_slice(const HuSlice& slice)
{
    std::vector<std::uint8_t> out(slice.hu.size());
    std::transform(slice.hu.begin(), slice.hu.end(), out.begin(), [](std::int16_t v) { return window_hu(v); });
    return out;
}

Tensor to_model_input(std::span<const std::uint8_t> windowed, std::size_t rows, std::size_t cols)
{
    if (windowed.size() != rows * cols)
        throw ShapeError("to_model_input: " + std::to_string(windowed.size()) + " pixels for " + std::to_string(rows) +
                         "x" + std::to_string(cols));
    Tensor t({1, rows, cols});
    for (std::size_t i = 0; i < windowed.size(); ++i)
        t[i] = static_cast<double>(windowed[i]) / 255.0;
    return t;
}

double ContourPolygon::signed_area() const
{
    double twice = 0.0;
    for (std::size_t i = 0, j = vertices.size() - 1; i < vertices.size(); j = i++)
        twice += vertices[j][0] * vertices[i][1] - vertices[i][0] * vertices[j][1];
    return 0.5 * twice;
}

RasterResult rasterize_contours(std::span<const ContourPolygon> polygons, const SliceGeometry& g)
{
    if (!(g.spacing_x_mm > 0.0) || !(g.spacing_y_mm > 0.0))
        throw std::invalid_argument("rasterize_contours: pixel spacing must be positive");
    RasterResult result{std::vector<std::uint8_t>(g.rows * g.cols, 0), {}};

    std::vector<const ContourPolygon*> usable;
    for (std::size_t k = 0; k < polygons.size(); ++k)
    {
        const auto& poly = polygons[k];
        if (poly.vertices.size() < 3 || poly.signed_area() == 0.0)
        {
            result.warnings.push_back("degenerate contour " + std::to_string(k) + " (" +
                                      std::to_string(poly.vertices.size()) + " vertices) ignored");
            continue;
        }
        usable.push_back(&poly);
    }

    std::vector<double> crossings;
    for (std::size_t r = 0; r < g.rows; ++r)
    {
        const double py = g.origin_y_mm + static_cast<double>(r) * g.spacing_y_mm;
        crossings.clear();
        for (const ContourPolygon* poly : usable)
        {
            const auto& v = poly->vertices;
            for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++)
            {
                // Half-open in y so a vertex on the scanline is counted once.
                if ((v[i][1] > py) != (v[j][1] > py))
                    crossings.push_back((v[j][0] - v[i][0]) * (py - v[i][1]) / (v[j][1] - v[i][1]) + v[i][0]);
            }
        }
        std::sort(crossings.begin(), crossings.end());
        // A center px is inside iff an odd number of crossings lie strictly right of it,
        // i.e. iff crossings[2k] <= px < crossings[2k+1] for some k.
        std::uint8_t* row = result.mask.data() + r * g.cols;
        for (std::size_t k = 0; k + 1 < crossings.size(); k += 2)
        {
            const double x0 = crossings[k], x1 = crossings[k + 1];
            const double first = std::ceil((x0 - g.origin_x_mm) / g.spacing_x_mm);
            std::size_t c = first <= 0.0 ? 0 : static_cast<std::size_t>(std::min(first, static_cast<double>(g.cols)));
            while (c > 0 && g.origin_x_mm + static_cast<double>(c - 1) * g.spacing_x_mm >= x0)
                --c;
            for (; c < g.cols; ++c)
            {
                const double px = g.origin_x_mm + static_cast<double>(c) * g.spacing_x_mm;
                if (px < x0)
                    continue;
                if (px >= x1)
                    break;
                row[c] ^= 1;
            }
        }
    }
    return result;
}

RasterResult rasterize_contour(const ContourPolygon& polygon, const SliceGeometry& geometry)
{
    return rasterize_contours(std::span<const ContourPolygon>(&polygon, 1), geometry);
}

DatasetError::DatasetError(Kind kind, fs::path path, const std::string& message)
    : std::runtime_error(message + " [" + path.string() + "]"), kind_(kind), path_(std::move(path))
{
}

bool is_iso_date(const std::string& text)
{
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-')
        return false;
    if (std::sscanf(text.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3)
        return false;
    return std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}}.ok();
}

namespace {

std::vector<unsigned char> read_bytes(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DatasetError(DatasetError::Kind::MissingFile, path, "cannot open file");
    return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& path, const void* data, std::size_t size)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DatasetError(DatasetError::Kind::Io, path, "cannot open file for writing");
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out)
        throw DatasetError(DatasetError::Kind::Io, path, "write failed");
}

}  // namespace

std::vector<std::int16_t> read_hu_file(const fs::path& path, std::size_t expected_pixels)
{
    const auto bytes = read_bytes(path);
    if (bytes.size() != 2 * expected_pixels)
        throw DatasetError(DatasetError::Kind::ShapeMismatch, path,
                           "image holds " + std::to_string(bytes.size()) + " bytes, expected " +
                               std::to_string(2 * expected_pixels));
    std::vector<std::int16_t> pixels(expected_pixels);
    for (std::size_t i = 0; i < expected_pixels; ++i)
        pixels[i] = static_cast<std::int16_t>(static_cast<std::uint16_t>(bytes[2 * i]) |
                                              static_cast<std::uint16_t>(bytes[2 * i + 1] << 8));
    return pixels;
}

void write_hu_file(const fs::path& path, std::span<const std::int16_t> pixels)
{
    std::vector<unsigned char> bytes(2 * pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i)
    {
        const auto u = static_cast<std::uint16_t>(pixels[i]);
        bytes[2 * i] = static_cast<unsigned char>(u & 0xff);
        bytes[2 * i + 1] = static_cast<unsigned char>(u >> 8);
    }
    write_bytes(path, bytes.data(), bytes.size());
}

std::vector<std::uint8_t> read_u8_file(const fs::path& path, std::size_t expected_pixels)
{
    auto bytes = read_bytes(path);
    if (bytes.size() != expected_pixels)
        throw DatasetError(DatasetError::Kind::ShapeMismatch, path,
                           "file holds " + std::to_string(bytes.size()) + " bytes, expected " +
                               std::to_string(expected_pixels));
    return std::vector<std::uint8_t>(bytes.begin(), bytes.end());
}

void write_u8_file(const fs::path& path, std::span<const std::uint8_t> pixels)
{
    write_bytes(path, pixels.data(), pixels.size());
}

void validate_record(const PatientRecord& r)
{
    const fs::path where = r.id;
    if (r.id.empty())
        throw DatasetError(DatasetError::Kind::MalformedManifest, where, "patient id is empty");
    if (!is_iso_date(r.acquisition_date))
        throw DatasetError(DatasetError::Kind::InvalidValue, where,
                           "acquisition_date '" + r.acquisition_date + "' is not YYYY-MM-DD");
    for (double s : r.spacing_mm)
        if (!(s > 0.0) || !std::isfinite(s))
            throw DatasetError(DatasetError::Kind::InvalidValue, where, "spacing must be positive");
    if (r.rows == 0 || r.cols == 0)
        throw DatasetError(DatasetError::Kind::ShapeMismatch, where, "slice extent must be positive");
    if (r.slices.empty())
        throw DatasetError(DatasetError::Kind::MalformedManifest, where, "patient has no slices");
    for (std::size_t k = 0; k < r.slices.size(); ++k)
    {
        const auto& s = r.slices[k];
        if (s.rows != r.rows || s.cols != r.cols || s.hu.size() != r.rows * r.cols)
            throw DatasetError(DatasetError::Kind::ShapeMismatch, where,
                               "slice " + std::to_string(k) + " extent differs from patient extent");
        for (auto v : s.hu)
            if (v < kHuMin || v > kHuMax)
                throw DatasetError(DatasetError::Kind::InvalidValue, where,
                                   "slice " + std::to_string(k) + " has HU " + std::to_string(v) + " outside [-1024, 3071]");
        if (k > 0 && !(s.z_mm > r.slices[k - 1].z_mm))
            throw DatasetError(DatasetError::Kind::InvalidValue, where, "slice z positions must increase");
    }
    if (r.mask.depth != r.slices.size() || r.mask.height != r.rows || r.mask.width != r.cols ||
        r.mask.voxels.size() != r.slices.size() * r.rows * r.cols)
        throw DatasetError(DatasetError::Kind::ShapeMismatch, where, "mask shape differs from image shape");
    for (auto v : r.mask.voxels)
        if (v > 1)
            throw DatasetError(DatasetError::Kind::InvalidValue, where, "mask value " + std::to_string(v) + " not in {0,1}");
}

namespace {

json parse_manifest(const fs::path& manifest_path)
{
    std::ifstream in(manifest_path);
    if (!in)
        throw DatasetError(DatasetError::Kind::MissingFile, manifest_path, "cannot open manifest");
    try
    {
        return json::parse(in);
    }
    catch (const json::exception& e)
    {
        throw DatasetError(DatasetError::Kind::MalformedManifest, manifest_path, std::string("invalid JSON: ") + e.what());
    }
}

template <typename T>
T field(const json& obj, const char* key, const fs::path& where)
{
    if (!obj.is_object() || !obj.contains(key))
        throw DatasetError(DatasetError::Kind::MalformedManifest, where, std::string("missing field '") + key + "'");
    try
    {
        return obj.at(key).get<T>();
    }
    catch (const json::exception&)
    {
        throw DatasetError(DatasetError::Kind::MalformedManifest, where, std::string("field '") + key + "' has the wrong type");
    }
}

struct PatientHeader
{
    std::string id;
    std::string date;
    std::array<double, 3> spacing{};
    std::size_t rows = 0, cols = 0;
};

PatientHeader read_header(const json& p, const fs::path& manifest_path)
{
    PatientHeader h;
    h.id = field<std::string>(p, "id", manifest_path);
    h.date = field<std::string>(p, "acquisition_date", manifest_path);
    const auto spacing = field<std::vector<double>>(p, "spacing_mm", manifest_path);
    if (spacing.size() != 3)
        throw DatasetError(DatasetError::Kind::MalformedManifest, manifest_path,
                           "patient " + h.id + ": spacing_mm must have 3 entries [z,y,x]");
    std::copy(spacing.begin(), spacing.end(), h.spacing.begin());
    h.rows = field<std::size_t>(p, "rows", manifest_path);
    h.cols = field<std::size_t>(p, "cols", manifest_path);
    return h;
}

std::vector<ContourPolygon> read_contours(const json& slice, const fs::path& manifest_path)
{
    std::vector<ContourPolygon> polygons;
    const auto raw = field<std::vector<std::vector<std::vector<double>>>>(slice, "contours", manifest_path);
    for (const auto& poly : raw)
    {
        ContourPolygon c;
        for (const auto& v : poly)
        {
            if (v.size() != 2)
                throw DatasetError(DatasetError::Kind::MalformedManifest, manifest_path, "contour vertex must be [x_mm, y_mm]");
            c.vertices.push_back({v[0], v[1]});
        }
        polygons.push_back(std::move(c));
    }
    return polygons;
}

std::string slice_stem(const std::string& id, std::size_t k)
{
    char buf[16];
    std::snprintf(buf, sizeof(buf), "_%04zu", k);
    return id + buf;
}

// Loads one patient; when `geometry_for_contours` is set, slices without a mask file are
// rasterized from inline contours.
PatientRecord load_patient(const json& p, const fs::path& manifest_path, std::vector<std::string>& warnings,
                           std::size_t* rasterized)
{
    const fs::path root = manifest_path.parent_path();
    const PatientHeader h = read_header(p, manifest_path);
    PatientRecord r;
    r.id = h.id;
    r.acquisition_date = h.date;
    r.spacing_mm = h.spacing;
    r.rows = h.rows;
    r.cols = h.cols;

    std::array<double, 2> origin{0.0, 0.0};
    if (p.contains("origin_mm"))
    {
        const auto o = field<std::vector<double>>(p, "origin_mm", manifest_path);
        if (o.size() != 2)
            throw DatasetError(DatasetError::Kind::MalformedManifest, manifest_path, "origin_mm must be [x_mm, y_mm]");
        origin = {o[0], o[1]};
    }

    const auto slices = field<json>(p, "slices", manifest_path);
    if (!slices.is_array())
        throw DatasetError(DatasetError::Kind::MalformedManifest, manifest_path, "patient " + r.id + ": slices must be an array");
    const std::size_t pixels = h.rows * h.cols;

    std::vector<std::pair<HuSlice, std::vector<std::uint8_t>>> loaded;
    for (const auto& s : slices)
    {
        HuSlice slice{h.rows, h.cols, {}, field<double>(s, "z_mm", manifest_path)};
        slice.hu = read_hu_file(root / field<std::string>(s, "image", manifest_path), pixels);
        std::vector<std::uint8_t> mask;
        if (s.contains("mask"))
        {
            const fs::path mask_path = root / field<std::string>(s, "mask", manifest_path);
            mask = read_u8_file(mask_path, pixels);
            for (auto v : mask)
                if (v > 1)
                    throw DatasetError(DatasetError::Kind::InvalidValue, mask_path, "mask value " + std::to_string(v) + " not in {0,1}");
        }
        else if (rasterized && s.contains("contours"))
        {
            const SliceGeometry g{h.rows, h.cols, origin[0], origin[1], h.spacing[2], h.spacing[1]};
            RasterResult rr = rasterize_contours(read_contours(s, manifest_path), g);
            for (auto& w : rr.warnings)
                warnings.push_back("patient " + r.id + " z=" + std::to_string(slice.z_mm) + ": " + w);
            mask = std::move(rr.mask);
            ++*rasterized;
        }
        else
        {
            throw DatasetError(DatasetError::Kind::MalformedManifest, manifest_path,
                               "patient " + r.id + ": slice at z=" + std::to_string(slice.z_mm) + " has no mask");
        }
        loaded.emplace_back(std::move(slice), std::move(mask));
    }
    std::stable_sort(loaded.begin(), loaded.end(), [](const auto& a, const auto& b) { return a.first.z_mm < b.first.z_mm; });

    r.mask = BinaryVolume(loaded.size(), h.rows, h.cols, h.spacing);
    for (std::size_t k = 0; k < loaded.size(); ++k)
    {
        std::copy(loaded[k].second.begin(), loaded[k].second.end(),
                  r.mask.voxels.begin() + static_cast<std::ptrdiff_t>(k * pixels));
        r.slices.push_back(std::move(loaded[k].first));
    }

    try
    {
        validate_record(r);
    }
    catch (const DatasetError& e)
    {
        throw DatasetError(e.kind(), manifest_path, e.what());
    }
    if (r.slices.size() < kTypicalMinSlices || r.slices.size() > kTypicalMaxSlices)
        warnings.push_back("patient " + r.id + ": " + std::to_string(r.slices.size()) +
                           " slices outside the typical range [164, 534]");
    return r;
}

LoadedDataset load_manifest(const fs::path& manifest_path, std::size_t* rasterized)
{
    const json doc = parse_manifest(manifest_path);
    const auto patients = field<json>(doc, "patients", manifest_path);
    if (!patients.is_array())
        throw DatasetError(DatasetError::Kind::MalformedManifest, manifest_path, "'patients' must be an array");

    LoadedDataset out;
    for (const auto& p : patients)
        out.patients.push_back(load_patient(p, manifest_path, out.warnings, rasterized));
    std::stable_sort(out.patients.begin(), out.patients.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < out.patients.size(); ++i)
        if (out.patients[i].id == out.patients[i - 1].id)
            throw DatasetError(DatasetError::Kind::MalformedManifest, manifest_path,
                               "duplicate patient id '" + out.patients[i].id + "'");
    return out;
}

json patient_entry(const PatientRecord& r)
{
    return json{{"id", r.id},
                {"acquisition_date", r.acquisition_date},
                {"spacing_mm", {r.spacing_mm[0], r.spacing_mm[1], r.spacing_mm[2]}},
                {"rows", r.rows},
                {"cols", r.cols},
                {"slices", json::array()}};
}

void write_manifest(const json& doc, const fs::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DatasetError(DatasetError::Kind::Io, path, "cannot write manifest");
    out << doc.dump(2) << '\n';
}

}  // namespace

LoadedDataset load_dataset(const fs::path& manifest_path)
{
    return load_manifest(manifest_path, nullptr);
}

fs::path write_dataset(std::span<const PatientRecord> patients, const fs::path& directory)
{
    std::vector<const PatientRecord*> ordered;
    for (const auto& p : patients)
    {
        validate_record(p);
        ordered.push_back(&p);
    }
    std::stable_sort(ordered.begin(), ordered.end(), [](auto a, auto b) { return a->id < b->id; });

    fs::create_directories(directory / "images");
    fs::create_directories(directory / "masks");
    json doc{{"patients", json::array()}};
    for (const PatientRecord* r : ordered)
    {
        json entry = patient_entry(*r);
        const std::size_t pixels = r->rows * r->cols;
        for (std::size_t k = 0; k < r->slices.size(); ++k)
        {
            const std::string stem = slice_stem(r->id, k);
            const std::string image = "images/" + stem + ".hu16";
            const std::string mask = "masks/" + stem + ".u8";
            write_hu_file(directory / image, r->slices[k].hu);
            write_u8_file(directory / mask,
                          std::span<const std::uint8_t>(r->mask.voxels.data() + k * pixels, pixels));
            entry["slices"].push_back(json{{"image", image}, {"mask", mask}, {"z_mm", r->slices[k].z_mm}});
        }
        doc["patients"].push_back(std::move(entry));
    }
    const fs::path manifest = directory / "manifest.json";
    write_manifest(doc, manifest);
    return manifest;
}

PrepSummary prepare_dataset(const fs::path& input_manifest, const fs::path& out_directory)
{
    PrepSummary summary;
    LoadedDataset data = load_manifest(input_manifest, &summary.rasterized_slices);
    summary.warnings = std::move(data.warnings);
    summary.manifest = write_dataset(data.patients, out_directory);

    // Add the windowed 8-bit images to the manifest just written.
    json doc = parse_manifest(summary.manifest);
    fs::create_directories(out_directory / "windowed");
    for (std::size_t i = 0; i < data.patients.size(); ++i)
    {
        const auto& r = data.patients[i];
        for (std::size_t k = 0; k < r.slices.size(); ++k)
        {
            const std::string path = "windowed/" + slice_stem(r.id, k) + ".u8";
            write_u8_file(out_directory / path, window_slice(r.slices[k]));
            doc["patients"][i]["slices"][k]["image_u8"] = path;
        }
        summary.slices += r.slices.size();
    }
    write_manifest(doc, summary.manifest);
    summary.patients = data.patients.size();
    return summary;
}

}  // namespace ptvseg
