#pragma once

// Test-only reference implementations. Each one follows the textbook definition directly and
// shares no code path with the library routine it checks.

#include "ptvseg/metrics.hpp"
#include "ptvseg/rng.hpp"
#include "ptvseg/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace ptvseg::oracle {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0)
{
    Tensor t(std::move(shape));
    for (auto& v : t.values())
        v = rng.uniform(lo, hi);
    return t;
}

inline ConvKernel random_kernel(Rng& rng, std::size_t c_out, std::size_t c_in, std::size_t kh, std::size_t kw)
{
    return ConvKernel{random_tensor(rng, {c_out, c_in, kh, kw}), random_tensor(rng, {c_out})};
}

/// Direct six-loop cross-correlation with explicit zero padding.
inline Tensor naive_conv2d(const Tensor& in, const ConvKernel& k, std::size_t pad)
{
    const std::size_t c_in = in.dim(0), h = in.dim(1), w = in.dim(2);
    const std::size_t c_out = k.weights.dim(0), kh = k.weights.dim(2), kw = k.weights.dim(3);
    const std::size_t oh = h + 2 * pad - kh + 1, ow = w + 2 * pad - kw + 1;
    Tensor out({c_out, oh, ow});
    for (std::size_t co = 0; co < c_out; ++co)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x)
            {
                double acc = k.bias[co];
                for (std::size_t ci = 0; ci < c_in; ++ci)
                    for (std::size_t i = 0; i < kh; ++i)
                        for (std::size_t j = 0; j < kw; ++j)
                        {
                            const long iy = static_cast<long>(y + i) - static_cast<long>(pad);
                            const long ix = static_cast<long>(x + j) - static_cast<long>(pad);
                            if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                                continue;
                            acc += k.weights[((co * c_in + ci) * kh + i) * kw + j] *
                                   in.at(ci, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
                        }
                out.at(co, y, x) = acc;
            }
    return out;
}

/// Scatter form of the stride-2 transposed convolution.
inline Tensor naive_upconv(const Tensor& in, const ConvKernel& k)
{
    const std::size_t c_in = in.dim(0), h = in.dim(1), w = in.dim(2), c_out = k.weights.dim(0);
    Tensor out({c_out, 2 * h, 2 * w});
    for (std::size_t co = 0; co < c_out; ++co)
        for (std::size_t y = 0; y < 2 * h; ++y)
            for (std::size_t x = 0; x < 2 * w; ++x)
                out.at(co, y, x) = k.bias[co];
    for (std::size_t ci = 0; ci < c_in; ++ci)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t co = 0; co < c_out; ++co)
                    for (std::size_t a = 0; a < 2; ++a)
                        for (std::size_t b = 0; b < 2; ++b)
                            out.at(co, 2 * y + a, 2 * x + b) += in.at(ci, y, x) * k.weights[((co * c_in + ci) * 2 + a) * 2 + b];
    return out;
}

/// Central finite differences of a scalar function with respect to every entry of `x`.
inline std::vector<double> numeric_gradient(Tensor& x, const std::function<double()>& f, double step)
{
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        const double saved = x[i];
        x[i] = saved + step;
        const double up = f();
        x[i] = saved - step;
        const double down = f();
        x[i] = saved;
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||); 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b)
{
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::sqrt(std::max(na, nb));
    return denom == 0.0 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

inline double weighted_sum(const Tensor& t, const Tensor& weights)
{
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i)
        s += t[i] * weights[i];
    return s;
}

/// Parameter count of a U-Net written out level by level, independent of layer_plan.
struct CountResult
{
    std::size_t layers = 0;
    std::size_t parameters = 0;
};

inline CountResult count_unet(std::size_t base, std::size_t depth, std::size_t in_ch = 1, std::size_t out_ch = 1)
{
    CountResult r;
    auto add = [&](std::size_t k, std::size_t ci, std::size_t co) {
        r.layers += 1;
        r.parameters += k * k * ci * co + co;
    };
    std::size_t c = in_ch;
    for (std::size_t i = 0; i < depth; ++i)
    {
        const std::size_t w = base * (std::size_t{1} << i);
        add(3, c, w);
        add(3, w, w);
        c = w;
    }
    const std::size_t bottom = base * (std::size_t{1} << depth);
    add(3, c, bottom);
    add(3, bottom, bottom);
    c = bottom;
    for (std::size_t i = depth; i-- > 0;)
    {
        const std::size_t w = base * (std::size_t{1} << i);
        add(2, c, w);
        add(3, 2 * w, w);
        add(3, w, w);
        c = w;
    }
    add(1, c, out_ch);
    return r;
}

/// |X n Y| by set counting.
inline double brute_dsc(const BinaryVolume& x, const BinaryVolume& y)
{
    double inter = 0, nx = 0, ny = 0;
    for (std::size_t i = 0; i < x.voxels.size(); ++i)
    {
        if (x.voxels[i] && y.voxels[i])
            inter += 1;
        if (x.voxels[i])
            nx += 1;
        if (y.voxels[i])
            ny += 1;
    }
    return nx + ny == 0 ? 1.0 : 2.0 * inter / (nx + ny);
}

/// Surface by explicit neighbour enumeration.
inline std::vector<std::array<double, 3>> brute_surface(const BinaryVolume& v)
{
    std::vector<std::array<double, 3>> pts;
    const int nb[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
    for (std::size_t z = 0; z < v.depth; ++z)
        for (std::size_t y = 0; y < v.height; ++y)
            for (std::size_t x = 0; x < v.width; ++x)
            {
                if (!v.at(z, y, x))
                    continue;
                bool boundary = false;
                for (const auto& d : nb)
                {
                    const long zz = static_cast<long>(z) + d[0], yy = static_cast<long>(y) + d[1], xx = static_cast<long>(x) + d[2];
                    if (zz < 0 || yy < 0 || xx < 0 || zz >= static_cast<long>(v.depth) || yy >= static_cast<long>(v.height) ||
                        xx >= static_cast<long>(v.width) ||
                        !v.at(static_cast<std::size_t>(zz), static_cast<std::size_t>(yy), static_cast<std::size_t>(xx)))
                        boundary = true;
                }
                if (boundary)
                    pts.push_back({static_cast<double>(z) * v.spacing_mm[0], static_cast<double>(y) * v.spacing_mm[1],
                                   static_cast<double>(x) * v.spacing_mm[2]});
            }
    return pts;
}

inline double euclid(const std::array<double, 3>& a, const std::array<double, 3>& b)
{
    const double dz = a[0] - b[0], dy = a[1] - b[1], dx = a[2] - b[2];
    return std::sqrt(dz * dz + dy * dy + dx * dx);
}

/// All-pairs directed distances: for every a in `from`, min over `to`.
inline std::vector<double> brute_directed(const std::vector<std::array<double, 3>>& from,
                                          const std::vector<std::array<double, 3>>& to)
{
    std::vector<double> out;
    for (const auto& a : from)
    {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& b : to)
            best = std::min(best, euclid(a, b));
        out.push_back(best);
    }
    return out;
}

inline double brute_hausdorff(const std::vector<std::array<double, 3>>& sx, const std::vector<std::array<double, 3>>& sy)
{
    double h = 0.0;
    for (double d : brute_directed(sx, sy))
        h = std::max(h, d);
    for (double d : brute_directed(sy, sx))
        h = std::max(h, d);
    return h;
}

/// Inclusive linear interpolation between closest ranks (the "linear" method).
inline double percentile_oracle(std::vector<double> v, double q)
{
    std::sort(v.begin(), v.end());
    const double rank = q * static_cast<double>(v.size() - 1);
    const std::size_t below = static_cast<std::size_t>(rank);
    if (below + 1 >= v.size())
        return v.back();
    return v[below] + (rank - static_cast<double>(below)) * (v[below + 1] - v[below]);
}

inline double brute_hd95(const std::vector<std::array<double, 3>>& sx, const std::vector<std::array<double, 3>>& sy)
{
    auto pooled = brute_directed(sx, sy);
    const auto back = brute_directed(sy, sx);
    pooled.insert(pooled.end(), back.begin(), back.end());
    return percentile_oracle(pooled, 0.95);
}

/// Crossing-number point-in-polygon test (W. R. Franklin's PNPOLY).
inline bool pnpoly(const std::vector<std::array<double, 2>>& v, double px, double py)
{
    bool inside = false;
    for (std::size_t i = 0, j = v.size() - 1; i < v.size(); j = i++)
        if (((v[i][1] > py) != (v[j][1] > py)) && (px < (v[j][0] - v[i][0]) * (py - v[i][1]) / (v[j][1] - v[i][1]) + v[i][0]))
            inside = !inside;
    return inside;
}

inline BinaryVolume random_volume(Rng& rng, std::size_t max_extent, double density)
{
    const std::size_t d = 1 + rng.below(max_extent), h = 1 + rng.below(max_extent), w = 1 + rng.below(max_extent);
    BinaryVolume v(d, h, w, {rng.uniform(0.5, 5.0), rng.uniform(0.3, 2.0), rng.uniform(0.3, 2.0)});
    for (auto& x : v.voxels)
        x = rng.uniform() < density ? 1 : 0;
    return v;
}

}  // namespace ptvseg::oracle
