#include "oracles.hpp"

#include "ptvseg/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ptvseg;
using oracle::numeric_gradient;
using oracle::random_kernel;
using oracle::random_tensor;
using oracle::relative_error;
using oracle::weighted_sum;

namespace {

Tensor ramp(Shape shape)
{
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<double>(i);
    return t;
}

}  // namespace

TEST(Conv2d, IdentityOneByOne)
{
    Rng rng(1);
    const Tensor x = random_tensor(rng, {1, 5, 7});
    ConvKernel k = make_kernel(1, 1, 1, 1);
    k.weights[0] = 1.0;
    EXPECT_EQ(conv2d_forward(x, k, Padding::Same), x);
    EXPECT_EQ(conv2d_forward(x, k, Padding::Valid), x);
}

TEST(Conv2d, ZeroKernelGivesBias)
{
    Rng rng(2);
    const Tensor x = random_tensor(rng, {2, 6, 6});
    ConvKernel k = make_kernel(3, 2, 3, 3);
    k.bias[0] = 0.5;
    k.bias[1] = -1.0;
    k.bias[2] = 2.0;
    const Tensor y = conv2d_forward(x, k, Padding::Same);
    ASSERT_EQ(y.shape(), (Shape{3, 6, 6}));
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 36; ++i)
            EXPECT_EQ(y.channel(c)[i], k.bias[c]);
}

TEST(Conv2d, RampValidExample)
{
    ConvKernel k = make_kernel(1, 1, 3, 3);
    k.weights.fill(1.0);
    const Tensor y = conv2d_forward(ramp({1, 4, 4}), k, Padding::Valid);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 2}));
    EXPECT_EQ(y.at(0, 0, 0), 45.0);
    EXPECT_EQ(y.at(0, 0, 1), 54.0);
    EXPECT_EQ(y.at(0, 1, 0), 81.0);
    EXPECT_EQ(y.at(0, 1, 1), 90.0);
    EXPECT_EQ(y, oracle::naive_conv2d(ramp({1, 4, 4}), k, 0));
}

TEST(Conv2d, MatchesNaiveOracleOnRandomShapes)
{
    Rng rng(3);
    for (int trial = 0; trial < 60; ++trial)
    {
        const std::size_t ci = 1 + rng.below(3), co = 1 + rng.below(3);
        const std::size_t h = 3 + rng.below(8), w = 3 + rng.below(8);
        const std::size_t kext = rng.below(2) ? 3 : 1;
        const Tensor x = random_tensor(rng, {ci, h, w});
        const ConvKernel k = random_kernel(rng, co, ci, kext, kext);
        for (Padding p : {Padding::Same, Padding::Valid})
        {
            const Tensor got = conv2d_forward(x, k, p);
            const Tensor want = oracle::naive_conv2d(x, k, p == Padding::Same ? kext / 2 : 0);
            ASSERT_EQ(got.shape(), want.shape());
            EXPECT_LT(relative_error(got.values(), want.values()), 1e-13);
        }
    }
}

TEST(Conv2d, ShapeErrorsNameAxis)
{
    const Tensor x({2, 4, 4});
    try
    {
        conv2d_forward(x, make_kernel(1, 3, 3, 3), Padding::Same);
        FAIL() << "expected ShapeError";
    }
    catch (const ShapeError& e)
    {
        EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
    }
    EXPECT_THROW(conv2d_forward(Tensor({1, 2, 2}), make_kernel(1, 1, 3, 3), Padding::Valid), ShapeError);
}

TEST(Conv2d, SamePaddingIsLinear)
{
    Rng rng(4);
    ConvKernel k = random_kernel(rng, 2, 2, 3, 3);
    k.bias.fill(0.0);
    const Tensor a = random_tensor(rng, {2, 5, 6}), b = random_tensor(rng, {2, 5, 6});
    Tensor mix(a.shape());
    for (std::size_t i = 0; i < mix.size(); ++i)
        mix[i] = 2.0 * a[i] - 0.5 * b[i];
    const Tensor fa = conv2d_forward(a, k, Padding::Same), fb = conv2d_forward(b, k, Padding::Same);
    const Tensor fm = conv2d_forward(mix, k, Padding::Same);
    for (std::size_t i = 0; i < fm.size(); ++i)
        EXPECT_NEAR(fm[i], 2.0 * fa[i] - 0.5 * fb[i], 1e-12);
}

TEST(Conv2d, BackwardTrivialCases)
{
    Rng rng(5);
    const Tensor x = random_tensor(rng, {2, 5, 5});
    const ConvKernel k = random_kernel(rng, 3, 2, 3, 3);
    const auto g0 = conv2d_backward(x, k, Tensor({3, 5, 5}), Padding::Same);
    for (const Tensor* t : {&g0.grad_input, &g0.grad_weights, &g0.grad_bias})
        for (double v : t->values())
            EXPECT_EQ(v, 0.0);

    ConvKernel id = make_kernel(1, 1, 1, 1);
    id.weights[0] = 1.0;
    const Tensor g = random_tensor(rng, {1, 4, 3});
    EXPECT_EQ(conv2d_backward(random_tensor(rng, {1, 4, 3}), id, g, Padding::Valid).grad_input, g);
    EXPECT_THROW(conv2d_backward(x, k, Tensor({3, 4, 5}), Padding::Same), ShapeError);
}

TEST(Conv2d, BackwardMatchesFiniteDifferences)
{
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial)
    {
        const std::size_t ci = 1 + rng.below(2), co = 1 + rng.below(2);
        const std::size_t kext = trial % 3 == 0 ? 1 : 3;
        const Padding pad = trial % 2 ? Padding::Same : Padding::Valid;
        Tensor x = random_tensor(rng, {ci, 5, 5});
        ConvKernel k = random_kernel(rng, co, ci, kext, kext);
        const Tensor g = random_tensor(rng, conv2d_forward(x, k, pad).shape());
        const auto grads = conv2d_backward(x, k, g, pad);
        auto f = [&] { return weighted_sum(conv2d_forward(x, k, pad), g); };
        EXPECT_LT(relative_error(grads.grad_input.values(), numeric_gradient(x, f, 1e-3)), 1e-4);
        EXPECT_LT(relative_error(grads.grad_weights.values(), numeric_gradient(k.weights, f, 1e-3)), 1e-4);
        EXPECT_LT(relative_error(grads.grad_bias.values(), numeric_gradient(k.bias, f, 1e-3)), 1e-4);
    }
}

TEST(MaxPool, SingleWindow)
{
    const Tensor x({1, 2, 2}, {1, 2, 3, 4});
    const auto r = maxpool2x2_forward(x);
    EXPECT_EQ(r.output[0], 4.0);
    EXPECT_EQ(r.indices.argmax[0], 3u);
}

TEST(MaxPool, ConstantInputPicksTopLeft)
{
    const auto r = maxpool2x2_forward(Tensor({2, 4, 6}, 1.5));
    ASSERT_EQ(r.output.shape(), (Shape{2, 2, 3}));
    std::size_t cell = 0;
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t y = 0; y < 2; ++y)
            for (std::size_t x = 0; x < 3; ++x)
                EXPECT_EQ(r.indices.argmax[cell++], (c * 4 + 2 * y) * 6 + 2 * x);
    EXPECT_EQ(maxpool2x2_forward(Tensor({2, 4, 6}, 1.5)).indices, r.indices);
}

TEST(MaxPool, OddExtentRejected)
{
    EXPECT_THROW(maxpool2x2_forward(Tensor({1, 3, 4})), ShapeError);
    EXPECT_THROW(maxpool2x2_forward(Tensor({1, 4, 5})), ShapeError);
}

TEST(MaxPool, BackwardRoutesToArgmax)
{
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial)
    {
        Tensor x = random_tensor(rng, {1 + rng.below(2), 4, 6});
        const auto r = maxpool2x2_forward(x);
        const Tensor g = random_tensor(rng, r.output.shape());
        const Tensor gi = maxpool2x2_backward(r.indices, g);
        auto f = [&] { return weighted_sum(maxpool2x2_forward(x).output, g); };
        EXPECT_LT(relative_error(gi.values(), numeric_gradient(x, f, 1e-6)), 1e-6);
    }
    const auto r = maxpool2x2_forward(Tensor({1, 2, 2}));
    const Tensor zero = maxpool2x2_backward(r.indices, Tensor({1, 1, 1}));
    for (double v : zero.values())
        EXPECT_EQ(v, 0.0);
}

TEST(MaxPool, BackwardRejectsBadIndex)
{
    PoolIndices bad{{1, 2, 2}, {7}};
    EXPECT_THROW(maxpool2x2_backward(bad, Tensor({1, 1, 1}, 1.0)), std::out_of_range);
}

TEST(UpConv, SinglePixelExpansion)
{
    ConvKernel k = make_kernel(1, 1, 2, 2);
    k.weights[0] = 1.0;
    k.weights[1] = 2.0;
    k.weights[2] = 3.0;
    k.weights[3] = 4.0;
    const Tensor y = upconv2x2_forward(Tensor({1, 1, 1}, 2.5), k);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 2}));
    EXPECT_EQ(y.at(0, 0, 0), 2.5);
    EXPECT_EQ(y.at(0, 0, 1), 5.0);
    EXPECT_EQ(y.at(0, 1, 0), 7.5);
    EXPECT_EQ(y.at(0, 1, 1), 10.0);

    const auto g = upconv2x2_backward(Tensor({1, 1, 1}, 2.5), k, Tensor({1, 2, 2}, {1, 1, 1, 1}));
    EXPECT_EQ(g.grad_input[0], 10.0);
    EXPECT_EQ(g.grad_weights, Tensor({1, 1, 2, 2}, 2.5));
    EXPECT_EQ(g.grad_bias[0], 4.0);
}

TEST(UpConv, ZeroInputGivesBias)
{
    Rng rng(8);
    const ConvKernel k = random_kernel(rng, 2, 3, 2, 2);
    const Tensor y = upconv2x2_forward(Tensor({3, 2, 3}), k);
    ASSERT_EQ(y.shape(), (Shape{2, 4, 6}));
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 24; ++i)
            EXPECT_EQ(y.channel(c)[i], k.bias[c]);
}

TEST(UpConv, MatchesScatterOracle)
{
    Rng rng(9);
    for (int trial = 0; trial < 40; ++trial)
    {
        const Tensor x = random_tensor(rng, {1 + rng.below(3), 1 + rng.below(5), 1 + rng.below(5)});
        const ConvKernel k = random_kernel(rng, 1 + rng.below(3), x.dim(0), 2, 2);
        EXPECT_LT(relative_error(upconv2x2_forward(x, k).values(), oracle::naive_upconv(x, k).values()), 1e-14);
    }
}

TEST(UpConv, BackwardMatchesFiniteDifferences)
{
    Rng rng(10);
    for (int trial = 0; trial < 100; ++trial)
    {
        Tensor x = random_tensor(rng, {1 + rng.below(2), 1 + rng.below(3), 1 + rng.below(3)});
        ConvKernel k = random_kernel(rng, 1 + rng.below(2), x.dim(0), 2, 2);
        const Tensor g = random_tensor(rng, upconv2x2_forward(x, k).shape());
        const auto grads = upconv2x2_backward(x, k, g);
        auto f = [&] { return weighted_sum(upconv2x2_forward(x, k), g); };
        EXPECT_LT(relative_error(grads.grad_input.values(), numeric_gradient(x, f, 1e-3)), 1e-4);
        EXPECT_LT(relative_error(grads.grad_weights.values(), numeric_gradient(k.weights, f, 1e-3)), 1e-4);
        EXPECT_LT(relative_error(grads.grad_bias.values(), numeric_gradient(k.bias, f, 1e-3)), 1e-4);
    }
    const auto z = upconv2x2_backward(Tensor({1, 2, 2}, 1.0), make_kernel(1, 1, 2, 2), Tensor({1, 4, 4}));
    for (double v : z.grad_input.values())
        EXPECT_EQ(v, 0.0);
}

TEST(Concat, EqualShapesStack)
{
    const Tensor a({1, 2, 2}, {1, 2, 3, 4}), b({2, 2, 2}, {5, 6, 7, 8, 9, 10, 11, 12});
    const Tensor c = concat_channels(a, b);
    ASSERT_EQ(c.shape(), (Shape{3, 2, 2}));
    for (std::size_t i = 0; i < 12; ++i)
        EXPECT_EQ(c[i], static_cast<double>(i + 1));
}

TEST(Concat, OddExcessCropsBottomRight)
{
    const Tensor b = ramp({1, 5, 4});
    const Tensor c = center_crop(b, 2, 3);
    // rows: excess 3 -> 1 from top, 2 from bottom; cols: excess 1 -> 0 from left, 1 from right
    ASSERT_EQ(c.shape(), (Shape{1, 2, 3}));
    for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 3; ++x)
            EXPECT_EQ(c.at(0, y, x), b.at(0, y + 1, x));
    EXPECT_THROW(concat_channels(Tensor({1, 6, 6}), Tensor({1, 5, 6})), ShapeError);
}

TEST(Concat, BackwardRestoresShapes)
{
    Rng rng(11);
    const Tensor a = random_tensor(rng, {2, 3, 3}), b = random_tensor(rng, {1, 6, 5});
    const Tensor g = random_tensor(rng, {3, 3, 3});
    const auto [ga, gb] = concat_channels_backward(g, 2, b.shape());
    EXPECT_EQ(ga.shape(), a.shape());
    EXPECT_EQ(gb.shape(), b.shape());
    Tensor bb = b, aa = a;
    auto f = [&] { return weighted_sum(concat_channels(aa, bb), g); };
    EXPECT_LT(relative_error(gb.values(), numeric_gradient(bb, f, 1e-4)), 1e-10);
    EXPECT_LT(relative_error(ga.values(), numeric_gradient(aa, f, 1e-4)), 1e-10);
}

TEST(Elementwise, ReluAndSigmoidValues)
{
    const Tensor r = relu_forward(Tensor({3}, {-1.0, 0.0, 2.0}));
    EXPECT_EQ(r[0], 0.0);
    EXPECT_EQ(r[1], 0.0);
    EXPECT_EQ(r[2], 2.0);
    EXPECT_EQ(relu_backward(Tensor({1}, {0.0}), Tensor({1}, {1.0}))[0], 0.0);
    EXPECT_EQ(sigmoid(0.0), 0.5);
    const double tiny = sigmoid(-710.0);
    EXPECT_TRUE(std::isfinite(tiny));
    EXPECT_GE(tiny, 0.0);
    EXPECT_EQ(sigmoid(710.0), 1.0);
}

TEST(Elementwise, GradientsMatchFiniteDifferences)
{
    Rng rng(12);
    for (int trial = 0; trial < 100; ++trial)
    {
        Tensor x = random_tensor(rng, {1, 3, 4}, -6.0, 6.0);
        for (auto& v : x.values())
            if (std::abs(v) < 0.01)
                v += 0.05;  // keep the ReLU kink out of the difference stencil
        const Tensor g = random_tensor(rng, x.shape());
        auto fr = [&] { return weighted_sum(relu_forward(x), g); };
        EXPECT_LT(relative_error(relu_backward(x, g).values(), numeric_gradient(x, fr, 1e-5)), 1e-6);
        auto fs = [&] { return weighted_sum(sigmoid_forward(x), g); };
        EXPECT_LT(relative_error(sigmoid_backward(sigmoid_forward(x), g).values(), numeric_gradient(x, fs, 1e-5)), 1e-6);
    }
}

TEST(Tensor, ForwardShapesOverRandomExtents)
{
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial)
    {
        const std::size_t c = 1 + rng.below(3), h = 2 * (2 + rng.below(5)), w = 2 * (2 + rng.below(5));
        const Tensor x = random_tensor(rng, {c, h, w});
        EXPECT_EQ(conv2d_forward(x, make_kernel(4, c, 3, 3), Padding::Same).shape(), (Shape{4, h, w}));
        EXPECT_EQ(conv2d_forward(x, make_kernel(4, c, 3, 3), Padding::Valid).shape(), (Shape{4, h - 2, w - 2}));
        EXPECT_EQ(maxpool2x2_forward(x).output.shape(), (Shape{c, h / 2, w / 2}));
        EXPECT_EQ(upconv2x2_forward(x, make_kernel(2, c, 2, 2)).shape(), (Shape{2, 2 * h, 2 * w}));
    }
}
