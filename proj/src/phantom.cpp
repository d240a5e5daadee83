#include "ptvseg/phantom.hpp"

#include "ptvseg/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ptvseg {

void PhantomSpec::validate() const
{
    if (patients < 1)
        throw std::invalid_argument("phantom: patient count must be >= 1");
    if (min_slices < 1 || max_slices < min_slices)
        throw std::invalid_argument("phantom: slice range must satisfy 1 <= min <= max");
    if (size < 16 || size % 16 != 0)
        throw std::invalid_argument("phantom: slice size must be a positive multiple of 16, got " + std::to_string(size));
    for (double s : spacing_mm)
        if (!(s > 0.0))
            throw std::invalid_argument("phantom: spacing must be positive");
    if (!(bone_margin_mm >= 0.0) || !(organ_margin_mm >= 0.0))
        throw std::invalid_argument("phantom: margins must be >= 0");
    if (!(noise_hu >= 0.0))
        throw std::invalid_argument("phantom: noise must be >= 0");
}

std::vector<std::uint8_t> dilate_mask(std::span<const std::uint8_t> mask, std::size_t rows, std::size_t cols,
                                      double radius_mm, double spacing_y_mm, double spacing_x_mm)
{
    if (mask.size() != rows * cols)
        throw ShapeError("dilate_mask: mask size does not match extent");
    if (!(radius_mm >= 0.0) || !(spacing_y_mm > 0.0) || !(spacing_x_mm > 0.0))
        throw std::invalid_argument("dilate_mask: radius must be >= 0 and spacing > 0");

    const auto reach_y = static_cast<std::ptrdiff_t>(std::floor(radius_mm / spacing_y_mm));
    const auto reach_x = static_cast<std::ptrdiff_t>(std::floor(radius_mm / spacing_x_mm));
    std::vector<std::pair<std::ptrdiff_t, std::ptrdiff_t>> offsets;
    const double r2 = radius_mm * radius_mm;
    for (std::ptrdiff_t dy = -reach_y; dy <= reach_y; ++dy)
        for (std::ptrdiff_t dx = -reach_x; dx <= reach_x; ++dx)
        {
            const double ey = static_cast<double>(dy) * spacing_y_mm;
            const double ex = static_cast<double>(dx) * spacing_x_mm;
            if (ey * ey + ex * ex <= r2)
                offsets.emplace_back(dy, dx);
        }

    std::vector<std::uint8_t> out(mask.begin(), mask.end());
    const auto h = static_cast<std::ptrdiff_t>(rows), w = static_cast<std::ptrdiff_t>(cols);
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x)
        {
            if (!mask[static_cast<std::size_t>(y * w + x)])
                continue;
            for (auto [dy, dx] : offsets)
            {
                const std::ptrdiff_t ty = y + dy, tx = x + dx;
                if (ty >= 0 && ty < h && tx >= 0 && tx < w)
                    out[static_cast<std::size_t>(ty * w + tx)] = 1;
            }
        }
    return out;
}

BinaryVolume dilate_volume(const BinaryVolume& volume, double radius_mm)
{
    BinaryVolume out = volume;
    const std::size_t plane = volume.height * volume.width;
    for (std::size_t z = 0; z < volume.depth; ++z)
    {
        const auto slice = std::span<const std::uint8_t>(volume.voxels.data() + z * plane, plane);
        const auto grown = dilate_mask(slice, volume.height, volume.width, radius_mm, volume.spacing_mm[1], volume.spacing_mm[2]);
        std::copy(grown.begin(), grown.end(), out.voxels.begin() + static_cast<std::ptrdiff_t>(z * plane));
    }
    return out;
}

namespace {

struct Ellipse
{
    double cy, cx;  // pixels, at mid-stack
    double ry, rx;  // semi-axes, pixels
    double hu;
    double drift_y = 0.0, drift_x = 0.0;  // center displacement at the stack ends (t = +-1)

    bool contains(double y, double x, double scale, double t) const
    {
        const double ny = (y - cy - t * drift_y) / (ry * scale);
        const double nx = (x - cx - t * drift_x) / (rx * scale);
        return ny * ny + nx * nx <= 1.0;
    }

    // Independent per-slice wobble of center and semi-axes.
    Ellipse jittered(Rng& rng, double shift, double stretch) const
    {
        Ellipse e = *this;
        e.cy += rng.uniform(-shift, shift);
        e.cx += rng.uniform(-shift, shift);
        e.ry *= rng.uniform(1.0 - stretch, 1.0 + stretch);
        e.rx *= rng.uniform(1.0 - stretch, 1.0 + stretch);
        return e;
    }
};

std::string iso_date_plus(std::size_t days)
{
    using namespace std::chrono;
    const year_month_day d{sys_days{year{2015} / January / 1} + std::chrono::days{static_cast<int>(days)}};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                  static_cast<unsigned>(d.day()));
    return buf;
}

}  // namespace

PatientRecord generate_patient(const PhantomSpec& spec, std::size_t index)
{
    spec.validate();
    Rng rng = Rng::derive(spec.seed, index);
    const double n = static_cast<double>(spec.size);
    const std::size_t slices = spec.min_slices + static_cast<std::size_t>(rng.below(spec.max_slices - spec.min_slices + 1));

    const double center = (n - 1.0) / 2.0;
    const Ellipse body{center + rng.uniform(-0.03, 0.03) * n, center + rng.uniform(-0.03, 0.03) * n,
                       rng.uniform(0.30, 0.38) * n, rng.uniform(0.38, 0.45) * n, 40.0};

    // Structures are placed inside the body with room for their margins.
    // Each structure also drifts in-plane along the stack.
    auto place = [&](double ry, double rx, double hu, double max_reach) {
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double reach = rng.uniform(0.0, max_reach);
        Ellipse e{body.cy + reach * (body.ry - ry) * std::sin(angle), body.cx + reach * (body.rx - rx) * std::cos(angle),
                  ry, rx, hu};
        e.drift_y = rng.uniform(-0.06, 0.06) * n;
        e.drift_x = rng.uniform(-0.06, 0.06) * n;
        return e;
    };
    const Ellipse organ = place(rng.uniform(0.08, 0.13) * n, rng.uniform(0.09, 0.15) * n, 80.0, 0.5);
    std::vector<Ellipse> bones;
    const std::size_t bone_count = 2 + static_cast<std::size_t>(rng.below(4));
    for (std::size_t b = 0; b < bone_count; ++b)
        bones.push_back(place(rng.uniform(0.03, 0.06) * n, rng.uniform(0.03, 0.06) * n, rng.uniform(650.0, 750.0), 0.75));

    PatientRecord r;
    char id[32];
    std::snprintf(id, sizeof(id), "P%03zu", index);
    r.id = id;
    r.acquisition_date = iso_date_plus(index);
    r.spacing_mm = spec.spacing_mm;
    r.rows = r.cols = spec.size;
    r.mask = BinaryVolume(slices, spec.size, spec.size, spec.spacing_mm);

    const std::size_t plane = spec.size * spec.size;
    for (std::size_t z = 0; z < slices; ++z)
    {
        // Structures taper towards the ends of the stack.
        const double t = slices > 1 ? 2.0 * static_cast<double>(z) / static_cast<double>(slices - 1) - 1.0 : 0.0;
        const double scale = 1.0 - 0.25 * t * t;

        HuSlice slice{spec.size, spec.size, std::vector<std::int16_t>(plane), static_cast<double>(z) * spec.spacing_mm[0]};
        std::vector<std::uint8_t> organ_mask(plane, 0), bone_mask(plane, 0);
        const Ellipse organ_z = organ.jittered(rng, 0.08 * n, 0.25);
        std::vector<Ellipse> bones_z;
        for (const auto& b : bones)
            bones_z.push_back(b.jittered(rng, 0.08 * n, 0.25));
        for (std::size_t y = 0; y < spec.size; ++y)
            for (std::size_t x = 0; x < spec.size; ++x)
            {
                const double py = static_cast<double>(y), px = static_cast<double>(x);
                const std::size_t i = y * spec.size + x;
                double hu = -1000.0;
                if (body.contains(py, px, 1.0, 0.0))
                {
                    hu = body.hu;
                    if (organ_z.contains(py, px, scale, t))
                    {
                        hu = organ.hu;
                        organ_mask[i] = 1;
                    }
                    for (const auto& b : bones_z)
                        if (b.contains(py, px, scale, t))
                        {
                            hu = b.hu;
                            bone_mask[i] = 1;
                        }
                }
                hu += spec.noise_hu * rng.normal();
                slice.hu[i] = static_cast<std::int16_t>(std::clamp(std::lround(hu), long{kHuMin}, long{kHuMax}));
            }

        const auto grown_organ = dilate_mask(organ_mask, spec.size, spec.size, spec.organ_margin_mm, spec.spacing_mm[1], spec.spacing_mm[2]);
        const auto grown_bone = dilate_mask(bone_mask, spec.size, spec.size, spec.bone_margin_mm, spec.spacing_mm[1], spec.spacing_mm[2]);
        for (std::size_t i = 0; i < plane; ++i)
            r.mask.voxels[z * plane + i] = grown_organ[i] | grown_bone[i];
        r.slices.push_back(std::move(slice));
    }
    return r;
}

std::vector<PatientRecord> generate_dataset(const PhantomSpec& spec)
{
    spec.validate();
    std::vector<PatientRecord> out;
    out.reserve(spec.patients);
    for (std::size_t i = 0; i < spec.patients; ++i)
        out.push_back(generate_patient(spec, i));
    return out;
}

}  // namespace ptvseg
