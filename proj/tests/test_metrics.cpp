#include "oracles.hpp"

#include "ptvseg/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace ptvseg;

namespace {

BinaryVolume volume(std::size_t d, std::size_t h, std::size_t w, std::array<double, 3> spacing = {1.0, 1.0, 1.0})
{
    return BinaryVolume(d, h, w, spacing);
}

SurfaceSet as_surface(std::vector<std::array<double, 3>> pts)
{
    return SurfaceSet{std::move(pts)};
}

}  // namespace

TEST(Binarize, ThresholdConvention)
{
    const std::vector<double> half(6, 0.5);
    for (auto v : binarize(half, 0.5))
        EXPECT_EQ(v, 1);
    const std::vector<double> p{0.0, 0.2, 0.49999, 0.7};
    for (auto v : binarize(p, 0.0))
        EXPECT_EQ(v, 1);
    const auto once = binarize(p, 0.5);
    EXPECT_EQ(once, (std::vector<std::uint8_t>{0, 0, 0, 1}));
    std::vector<double> again(once.begin(), once.end());
    EXPECT_EQ(binarize(again, 0.5), once);
}

TEST(Dsc, Examples)
{
    BinaryVolume x = volume(1, 4, 4), y = volume(1, 4, 4);
    EXPECT_EQ(dsc(x, y), 1.0);
    for (std::size_t r = 1; r < 3; ++r)
        for (std::size_t c = 0; c < 2; ++c)
        {
            x.at(0, r, c) = 1;
            y.at(0, r, c + 1) = 1;
        }
    EXPECT_EQ(dsc(x, y), 0.5);
    EXPECT_EQ(dsc(x, x), 1.0);
    BinaryVolume far = volume(1, 4, 4);
    far.at(0, 3, 3) = 1;
    EXPECT_EQ(dsc(x, far), 0.0);
    EXPECT_THROW(dsc(x, volume(1, 4, 5)), ShapeError);
}

TEST(Surface, Examples)
{
    BinaryVolume one = volume(3, 3, 3, {2.0, 1.0, 0.5});
    one.at(1, 2, 1) = 1;
    const auto s1 = extract_surface(one);
    ASSERT_EQ(s1.size(), 1u);
    EXPECT_EQ(s1.points[0], (std::array<double, 3>{2.0, 2.0, 0.5}));

    BinaryVolume cube = volume(5, 5, 5);
    for (std::size_t z = 1; z < 4; ++z)
        for (std::size_t y = 1; y < 4; ++y)
            for (std::size_t x = 1; x < 4; ++x)
                cube.at(z, y, x) = 1;
    const auto sc = extract_surface(cube);
    EXPECT_EQ(sc.size(), 26u);
    EXPECT_EQ(std::count(sc.points.begin(), sc.points.end(), std::array<double, 3>{2.0, 2.0, 2.0}), 0);

    EXPECT_TRUE(extract_surface(volume(2, 2, 2)).empty());

    // a volume filled to its edges is all surface (out of bounds is background)
    BinaryVolume full = volume(2, 3, 3);
    std::fill(full.voxels.begin(), full.voxels.end(), 1);
    EXPECT_EQ(extract_surface(full).size(), 18u);
}

TEST(Hausdorff, Examples)
{
    BinaryVolume a = volume(1, 1, 8, {5.0, 1.2, 1.2}), b = volume(1, 1, 8, {5.0, 1.2, 1.2});
    a.at(0, 0, 1) = 1;
    b.at(0, 0, 4) = 1;
    const auto sa = extract_surface(a), sb = extract_surface(b);
    EXPECT_NEAR(*hausdorff(sa, sb), 3.6, 1e-12);
    EXPECT_EQ(*hausdorff(sa, sa), 0.0);
    EXPECT_EQ(*hd95(sa, sa), 0.0);
    EXPECT_FALSE(hausdorff(sa, SurfaceSet{}).has_value());
    EXPECT_FALSE(hd95(SurfaceSet{}, sb).has_value());
}

TEST(Hd95, OutlierExample)
{
    // 19 pooled distances of 1.0 and one of 100.0: the inclusive linear percentile sits at rank
    // 0.95 * 19 = 18.05, giving 1.0 + 0.05 * 99 = 5.95 rather than 1.0.
    std::vector<double> twenty(19, 1.0);
    twenty.push_back(100.0);
    EXPECT_NEAR(percentile_linear(twenty, 0.95), 5.95, 1e-12);
    EXPECT_EQ(percentile_linear(twenty, 0.95), oracle::percentile_oracle(twenty, 0.95));
    // with 100 distances the single outlier falls above the 95th percentile
    std::vector<double> hundred(99, 1.0);
    hundred.push_back(100.0);
    EXPECT_EQ(percentile_linear(hundred, 0.95), 1.0);

    // ten points per side one unit apart, plus one far point on one side
    std::vector<std::array<double, 3>> x, y;
    for (int i = 0; i < 10; ++i)
    {
        x.push_back({0.0, 0.0, 10.0 * i});
        y.push_back({0.0, 1.0, 10.0 * i});
    }
    x.push_back({0.0, -99.0, 0.0});
    const double h95 = *hd95(as_surface(x), as_surface(y));
    EXPECT_EQ(h95, oracle::brute_hd95(x, y));
    EXPECT_LT(h95, *hausdorff(as_surface(x), as_surface(y)));
}

TEST(Percentile, MatchesOracle)
{
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial)
    {
        std::vector<double> v(1 + rng.below(40));
        for (auto& x : v)
            x = rng.uniform(0.0, 50.0);
        const double q = rng.uniform();
        EXPECT_EQ(percentile_linear(v, q), oracle::percentile_oracle(v, q));
    }
    EXPECT_THROW(percentile_linear({}, 0.5), std::invalid_argument);
}

TEST(Metrics, RandomVolumesMatchBruteForceExactly)
{
    Rng rng(2024);
    for (int trial = 0; trial < 500; ++trial)
    {
        const double density = rng.uniform(0.02, 0.6);
        const BinaryVolume x = oracle::random_volume(rng, 16, density);
        BinaryVolume y = x;
        for (auto& v : y.voxels)
            v = rng.uniform() < density ? 1 : 0;

        EXPECT_EQ(dsc(x, y), oracle::brute_dsc(x, y));
        const auto sx = oracle::brute_surface(x), sy = oracle::brute_surface(y);
        const auto lx = extract_surface(x), ly = extract_surface(y);
        ASSERT_EQ(lx.points, sx);
        ASSERT_EQ(ly.points, sy);
        const VolumeMetrics m = evaluate_volume(x, y);
        if (sx.empty() || sy.empty())
        {
            EXPECT_FALSE(m.hd_mm.has_value());
            continue;
        }
        EXPECT_EQ(*m.hd_mm, oracle::brute_hausdorff(sx, sy));
        EXPECT_EQ(*m.hd95_mm, oracle::brute_hd95(sx, sy));
        EXPECT_EQ(*hausdorff(lx, ly), *m.hd_mm);
        EXPECT_LE(*m.hd95_mm, *m.hd_mm);
    }
}

TEST(SurfaceIndex, NearestMatchesScan)
{
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial)
    {
        std::vector<std::array<double, 3>> pts(1 + rng.below(300));
        for (auto& p : pts)
            p = {rng.uniform(0, 20), rng.uniform(0, 20), rng.uniform(0, 20)};
        const SurfaceIndex index(as_surface(pts));
        for (int q = 0; q < 40; ++q)
        {
            const std::array<double, 3> query{rng.uniform(-5, 25), rng.uniform(-5, 25), rng.uniform(-5, 25)};
            double best = INFINITY;
            for (const auto& p : pts)
                best = std::min(best, oracle::euclid(query, p));
            EXPECT_EQ(index.nearest_distance(query), best);
        }
    }
}

TEST(Metrics, SliceDiagnostics)
{
    BinaryVolume a = volume(2, 4, 4), b = volume(2, 4, 4);
    a.at(0, 1, 1) = 1;
    b.at(0, 1, 1) = 1;
    a.at(1, 2, 2) = 1;
    const auto per_slice = evaluate_slices(a, b);
    ASSERT_EQ(per_slice.size(), 2u);
    EXPECT_EQ(per_slice[0].dsc, 1.0);
    EXPECT_EQ(per_slice[1].dsc, 0.0);
    EXPECT_FALSE(per_slice[1].hd_mm.has_value());
}

TEST(BinaryVolume, Validation)
{
    BinaryVolume v = volume(1, 2, 2);
    v.voxels[0] = 2;
    EXPECT_THROW(v.validate(), std::invalid_argument);
    BinaryVolume s(1, 1, 1, {0.0, 1.0, 1.0});
    EXPECT_THROW(s.validate(), std::invalid_argument);
}
