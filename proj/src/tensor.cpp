#include "ptvseg/tensor.hpp"

#include "ptvseg/simd.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace ptvseg {

std::string shape_to_string(const Shape& shape)
{
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i)
        out << (i ? "," : "") << shape[i];
    out << ']';
    return out.str();
}

namespace {

std::size_t element_count(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_rank(const Tensor& t, std::size_t rank, const char* what)
{
    if (t.rank() != rank)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_to_string(t.shape()));
}

void require_axis(const char* what, const char* axis, std::size_t expected, std::size_t actual)
{
    if (expected != actual)
        throw ShapeError(std::string(what) + ": axis '" + axis + "' expected " + std::to_string(expected) +
                         ", got " + std::to_string(actual));
}

// Geometry of a stride-1 convolution evaluated on a zero-padded copy of the input.
// Outputs are accumulated in a buffer whose row stride equals the padded width, so every
// kernel tap is a fixed offset into the padded input over one contiguous run of `span`. The
// last (kw - 1) columns of each buffered row are scratch and never read back.
struct ConvPlan
{
    std::size_t c_in, c_out, kh, kw;
    std::size_t height, width;          // input
    std::size_t pad;
    std::size_t padded_h, padded_w;
    std::size_t out_h, out_w;
    std::size_t span;                   // (out_h - 1) * padded_w + out_w

    std::size_t padded_plane() const { return padded_h * padded_w; }
    std::size_t tap_offset(std::size_t ky, std::size_t kx) const { return ky * padded_w + kx; }
};

ConvPlan plan_conv(const Tensor& input, const ConvKernel& kernel, Padding padding)
{
    require_rank(input, 3, "conv2d input");
    require_rank(kernel.weights, 4, "conv2d weights");
    ConvPlan p{};
    p.c_out = kernel.weights.dim(0);
    p.c_in = kernel.weights.dim(1);
    p.kh = kernel.weights.dim(2);
    p.kw = kernel.weights.dim(3);
    require_axis("conv2d", "channels", p.c_in, input.dim(0));
    require_axis("conv2d bias", "out_channels", p.c_out, kernel.bias.size());
    if (p.kh < 1 || p.kh > 3 || p.kw < 1 || p.kw > 3)
        throw ShapeError("conv2d: kernel extent must be 1, 2 or 3, got " + shape_to_string(kernel.weights.shape()));
    p.height = input.dim(1);
    p.width = input.dim(2);
    if (padding == Padding::Same)
    {
        if (p.kh != p.kw || p.kh % 2 == 0)
            throw ShapeError("conv2d: same padding requires a square odd kernel, got " +
                             shape_to_string(kernel.weights.shape()));
        p.pad = (p.kh - 1) / 2;
    }
    if (p.height + 2 * p.pad < p.kh)
        throw ShapeError("conv2d: axis 'height' " + std::to_string(p.height) + " smaller than kernel");
    if (p.width + 2 * p.pad < p.kw)
        throw ShapeError("conv2d: axis 'width' " + std::to_string(p.width) + " smaller than kernel");
    p.padded_h = p.height + 2 * p.pad;
    p.padded_w = p.width + 2 * p.pad;
    p.out_h = p.padded_h - p.kh + 1;
    p.out_w = p.padded_w - p.kw + 1;
    p.span = (p.out_h - 1) * p.padded_w + p.out_w;
    return p;
}

std::vector<double> pad_planes(const Tensor& input, const ConvPlan& p)
{
    std::vector<double> padded(p.c_in * p.padded_plane(), 0.0);
    for (std::size_t c = 0; c < p.c_in; ++c)
        for (std::size_t y = 0; y < p.height; ++y)
        {
            const double* src = input.channel(c) + y * p.width;
            std::copy(src, src + p.width, padded.data() + c * p.padded_plane() + (y + p.pad) * p.padded_w + p.pad);
        }
    return padded;
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values))
{
    if (data_.size() != element_count(shape_))
        throw ShapeError("tensor: " + std::to_string(data_.size()) + " values do not fill shape " +
                         shape_to_string(shape_));
}

void Tensor::fill(double value)
{
    std::fill(data_.begin(), data_.end(), value);
}

bool Tensor::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

ConvKernel make_kernel(std::size_t c_out, std::size_t c_in, std::size_t kh, std::size_t kw)
{
    return ConvKernel{Tensor({c_out, c_in, kh, kw}), Tensor({c_out})};
}

Tensor conv2d_forward(const Tensor& input, const ConvKernel& kernel, Padding padding)
{
    const ConvPlan p = plan_conv(input, kernel, padding);
    const auto& k = simd::kernels();
    const std::vector<double> padded = pad_planes(input, p);

    // one tap per (ci, ky, kx), the weight layout order
    const std::size_t taps = p.c_in * p.kh * p.kw;
    std::vector<std::ptrdiff_t> offsets;
    offsets.reserve(taps);
    for (std::size_t ci = 0; ci < p.c_in; ++ci)
        for (std::size_t ky = 0; ky < p.kh; ++ky)
            for (std::size_t kx = 0; kx < p.kw; ++kx)
                offsets.push_back(static_cast<std::ptrdiff_t>(ci * p.padded_plane() + p.tap_offset(ky, kx)));

    Tensor output({p.c_out, p.out_h, p.out_w});
    std::vector<double> acc(p.padded_plane());
    for (std::size_t co = 0; co < p.c_out; ++co)
    {
        std::fill(acc.begin(), acc.end(), kernel.bias[co]);
        k.gather_taps(padded.data(), offsets.data(), kernel.weights.data() + co * taps, taps, acc.data(), p.span);
        double* dst = output.channel(co);
        for (std::size_t y = 0; y < p.out_h; ++y)
            std::copy_n(acc.data() + y * p.padded_w, p.out_w, dst + y * p.out_w);
    }
    return output;
}

ConvGradients conv2d_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_out,
                              Padding padding)
{
    const ConvPlan p = plan_conv(input, kernel, padding);
    require_rank(grad_out, 3, "conv2d grad_out");
    require_axis("conv2d grad_out", "channels", p.c_out, grad_out.dim(0));
    require_axis("conv2d grad_out", "height", p.out_h, grad_out.dim(1));
    require_axis("conv2d grad_out", "width", p.out_w, grad_out.dim(2));

    const auto& k = simd::kernels();
    const std::vector<double> padded = pad_planes(input, p);
    const std::size_t kk = p.kh * p.kw;
    const std::size_t taps = p.c_in * kk;
    const std::size_t plane = p.padded_plane();

    // Strided grad_out behind a zero margin as long as the largest tap offset. Reading at
    // (index - tap) then lands either in this plane or in the zero tail of the previous one.
    const std::size_t margin = p.tap_offset(p.kh - 1, p.kw - 1);
    std::vector<double> go(margin + p.c_out * plane, 0.0);
    for (std::size_t c = 0; c < p.c_out; ++c)
        for (std::size_t y = 0; y < p.out_h; ++y)
            std::copy_n(grad_out.channel(c) + y * p.out_w, p.out_w, go.data() + margin + c * plane + y * p.padded_w);

    ConvGradients g{Tensor(input.shape()), Tensor(kernel.weights.shape()), Tensor(kernel.bias.shape())};

    std::vector<std::ptrdiff_t> offsets;
    for (std::size_t ci = 0; ci < p.c_in; ++ci)
        for (std::size_t ky = 0; ky < p.kh; ++ky)
            for (std::size_t kx = 0; kx < p.kw; ++kx)
                offsets.push_back(static_cast<std::ptrdiff_t>(ci * plane + p.tap_offset(ky, kx)));
    for (std::size_t co = 0; co < p.c_out; ++co)
    {
        const double* go_plane = go.data() + margin + co * plane;
        g.grad_bias[co] = k.sum(grad_out.channel(co), p.out_h * p.out_w);
        k.dot_taps(go_plane, padded.data(), offsets.data(), taps, g.grad_weights.data() + co * taps, p.span);
    }

    // grad_input[ci] at padded index j = sum over (co, tap) of w * go[co][j - tap]
    std::vector<std::ptrdiff_t> back_offsets;
    for (std::size_t co = 0; co < p.c_out; ++co)
        for (std::size_t ky = 0; ky < p.kh; ++ky)
            for (std::size_t kx = 0; kx < p.kw; ++kx)
                back_offsets.push_back(static_cast<std::ptrdiff_t>(margin + co * plane) -
                                       static_cast<std::ptrdiff_t>(p.tap_offset(ky, kx)));
    std::vector<double> weights_ci(p.c_out * kk);
    std::vector<double> gplane(plane);
    for (std::size_t ci = 0; ci < p.c_in; ++ci)
    {
        for (std::size_t co = 0; co < p.c_out; ++co)
            std::copy_n(kernel.weights.data() + (co * p.c_in + ci) * kk, kk, weights_ci.data() + co * kk);
        std::fill(gplane.begin(), gplane.end(), 0.0);
        k.gather_taps(go.data(), back_offsets.data(), weights_ci.data(), back_offsets.size(), gplane.data(), plane);
        for (std::size_t y = 0; y < p.height; ++y)
            std::copy_n(gplane.data() + (y + p.pad) * p.padded_w + p.pad, p.width, g.grad_input.channel(ci) + y * p.width);
    }
    return g;
}

PoolResult maxpool2x2_forward(const Tensor& input)
{
    require_rank(input, 3, "maxpool2x2 input");
    const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h % 2 != 0)
        throw ShapeError("maxpool2x2: axis 'height' must be even, got " + std::to_string(h));
    if (w % 2 != 0)
        throw ShapeError("maxpool2x2: axis 'width' must be even, got " + std::to_string(w));

    PoolResult r{Tensor({c, h / 2, w / 2}), PoolIndices{input.shape(), {}}};
    r.indices.argmax.resize(r.output.size());
    std::size_t o = 0;
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; y += 2)
            for (std::size_t x = 0; x < w; x += 2, ++o)
            {
                const std::size_t top = (ch * h + y) * w + x;
                const std::size_t window[4] = {top, top + 1, top + w, top + w + 1};
                std::size_t best = window[0];
                for (std::size_t i = 1; i < 4; ++i)
                    if (input[window[i]] > input[best])
                        best = window[i];
                r.output[o] = input[best];
                r.indices.argmax[o] = static_cast<std::uint32_t>(best);
            }
    return r;
}

Tensor maxpool2x2_backward(const PoolIndices& indices, const Tensor& grad_out)
{
    if (grad_out.size() != indices.argmax.size())
        throw ShapeError("maxpool2x2_backward: grad_out has " + std::to_string(grad_out.size()) +
                         " cells, indices cover " + std::to_string(indices.argmax.size()));
    Tensor grad_in(indices.input_shape);
    for (std::size_t o = 0; o < indices.argmax.size(); ++o)
    {
        const std::size_t target = indices.argmax[o];
        if (target >= grad_in.size())
            throw std::out_of_range("maxpool2x2_backward: argmax index " + std::to_string(target) +
                                    " outside input of " + std::to_string(grad_in.size()) + " cells");
        grad_in[target] += grad_out[o];
    }
    return grad_in;
}

namespace {

void check_upconv(const Tensor& input, const ConvKernel& kernel)
{
    require_rank(input, 3, "upconv2x2 input");
    require_rank(kernel.weights, 4, "upconv2x2 weights");
    require_axis("upconv2x2", "kernel_h", 2, kernel.weights.dim(2));
    require_axis("upconv2x2", "kernel_w", 2, kernel.weights.dim(3));
    require_axis("upconv2x2", "channels", kernel.weights.dim(1), input.dim(0));
    require_axis("upconv2x2 bias", "out_channels", kernel.weights.dim(0), kernel.bias.size());
}

}  // namespace

Tensor upconv2x2_forward(const Tensor& input, const ConvKernel& kernel)
{
    check_upconv(input, kernel);
    const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t c_out = kernel.weights.dim(0);
    const std::size_t plane = h * w;
    const auto& k = simd::kernels();

    std::vector<std::ptrdiff_t> offsets(c_in);
    for (std::size_t ci = 0; ci < c_in; ++ci)
        offsets[ci] = static_cast<std::ptrdiff_t>(ci * plane);
    std::vector<double> taps(c_in);

    Tensor output({c_out, 2 * h, 2 * w});
    std::vector<double> acc(plane);
    for (std::size_t co = 0; co < c_out; ++co)
        for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b)
            {
                for (std::size_t ci = 0; ci < c_in; ++ci)
                    taps[ci] = kernel.weights[((co * c_in + ci) * 2 + a) * 2 + b];
                std::fill(acc.begin(), acc.end(), kernel.bias[co]);
                k.gather_taps(input.data(), offsets.data(), taps.data(), c_in, acc.data(), plane);
                for (std::size_t y = 0; y < h; ++y)
                    for (std::size_t x = 0; x < w; ++x)
                        output.at(co, 2 * y + a, 2 * x + b) = acc[y * w + x];
            }
    return output;
}

ConvGradients upconv2x2_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_out)
{
    check_upconv(input, kernel);
    const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    const std::size_t c_out = kernel.weights.dim(0);
    require_rank(grad_out, 3, "upconv2x2 grad_out");
    require_axis("upconv2x2 grad_out", "channels", c_out, grad_out.dim(0));
    require_axis("upconv2x2 grad_out", "height", 2 * h, grad_out.dim(1));
    require_axis("upconv2x2 grad_out", "width", 2 * w, grad_out.dim(2));

    const std::size_t plane = h * w;
    const auto& k = simd::kernels();
    ConvGradients g{Tensor(input.shape()), Tensor(kernel.weights.shape()), Tensor(kernel.bias.shape())};

    // grad_out split into one plane per (co, a, b), the weight layout order without ci
    std::vector<double> gathered(c_out * 4 * plane);
    for (std::size_t co = 0; co < c_out; ++co)
    {
        g.grad_bias[co] = k.sum(grad_out.channel(co), 4 * plane);
        for (std::size_t ab = 0; ab < 4; ++ab)
        {
            double* dst = gathered.data() + (co * 4 + ab) * plane;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    dst[y * w + x] = grad_out.at(co, 2 * y + ab / 2, 2 * x + ab % 2);
        }
    }

    std::vector<std::ptrdiff_t> in_offsets(c_in);
    for (std::size_t ci = 0; ci < c_in; ++ci)
        in_offsets[ci] = static_cast<std::ptrdiff_t>(ci * plane);
    std::vector<double> dots(c_in);
    for (std::size_t co = 0; co < c_out; ++co)
        for (std::size_t ab = 0; ab < 4; ++ab)
        {
            k.dot_taps(gathered.data() + (co * 4 + ab) * plane, input.data(), in_offsets.data(), c_in, dots.data(), plane);
            for (std::size_t ci = 0; ci < c_in; ++ci)
                g.grad_weights[(co * c_in + ci) * 4 + ab] = dots[ci];
        }

    std::vector<std::ptrdiff_t> out_offsets(c_out * 4);
    for (std::size_t i = 0; i < out_offsets.size(); ++i)
        out_offsets[i] = static_cast<std::ptrdiff_t>(i * plane);
    std::vector<double> taps(c_out * 4);
    for (std::size_t ci = 0; ci < c_in; ++ci)
    {
        for (std::size_t co = 0; co < c_out; ++co)
            for (std::size_t ab = 0; ab < 4; ++ab)
                taps[co * 4 + ab] = kernel.weights[(co * c_in + ci) * 4 + ab];
        k.gather_taps(gathered.data(), out_offsets.data(), taps.data(), taps.size(), g.grad_input.channel(ci), plane);
    }
    return g;
}

Tensor center_crop(const Tensor& t, std::size_t height, std::size_t width)
{
    require_rank(t, 3, "center_crop");
    const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    if (h < height)
        throw ShapeError("center_crop: axis 'height' " + std::to_string(h) + " < " + std::to_string(height));
    if (w < width)
        throw ShapeError("center_crop: axis 'width' " + std::to_string(w) + " < " + std::to_string(width));
    const std::size_t top = (h - height) / 2, left = (w - width) / 2;
    Tensor out({c, height, width});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < height; ++y)
            std::copy_n(t.channel(ch) + (y + top) * w + left, width, out.channel(ch) + y * width);
    return out;
}

Tensor center_embed(const Tensor& t, std::size_t height, std::size_t width)
{
    require_rank(t, 3, "center_embed");
    const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
    if (height < h)
        throw ShapeError("center_embed: axis 'height' " + std::to_string(height) + " < " + std::to_string(h));
    if (width < w)
        throw ShapeError("center_embed: axis 'width' " + std::to_string(width) + " < " + std::to_string(w));
    const std::size_t top = (height - h) / 2, left = (width - w) / 2;
    Tensor out({c, height, width});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < h; ++y)
            std::copy_n(t.channel(ch) + y * w, w, out.channel(ch) + (y + top) * width + left);
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b)
{
    require_rank(a, 3, "concat_channels a");
    require_rank(b, 3, "concat_channels b");
    const std::size_t h = a.dim(1), w = a.dim(2);
    const Tensor cropped = center_crop(b, h, w);
    Tensor out({a.dim(0) + b.dim(0), h, w});
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(cropped.values().begin(), cropped.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

std::pair<Tensor, Tensor> concat_channels_backward(const Tensor& grad_out, std::size_t a_channels, const Shape& b_shape)
{
    require_rank(grad_out, 3, "concat_channels_backward");
    if (b_shape.size() != 3)
        throw ShapeError("concat_channels_backward: b must be rank 3, got " + shape_to_string(b_shape));
    const std::size_t h = grad_out.dim(1), w = grad_out.dim(2);
    require_axis("concat_channels_backward", "channels", a_channels + b_shape[0], grad_out.dim(0));
    const std::size_t split = a_channels * h * w;
    Tensor grad_a({a_channels, h, w}, std::vector<double>(grad_out.values().begin(), grad_out.values().begin() + static_cast<std::ptrdiff_t>(split)));
    Tensor grad_b_cropped({b_shape[0], h, w}, std::vector<double>(grad_out.values().begin() + static_cast<std::ptrdiff_t>(split), grad_out.values().end()));
    return {std::move(grad_a), center_embed(grad_b_cropped, b_shape[1], b_shape[2])};
}

Tensor relu_forward(const Tensor& x)
{
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out)
{
    if (x.shape() != grad_out.shape())
        throw ShapeError("relu_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                         " differs from input " + shape_to_string(x.shape()));
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        g[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
    return g;
}

double sigmoid(double x)
{
    if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor sigmoid_forward(const Tensor& x)
{
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = sigmoid(x[i]);
    return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out)
{
    if (y.shape() != grad_out.shape())
        throw ShapeError("sigmoid_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                         " differs from output " + shape_to_string(y.shape()));
    Tensor g(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i)
        g[i] = grad_out[i] * y[i] * (1.0 - y[i]);
    return g;
}

}  // namespace ptvseg
