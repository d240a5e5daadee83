#include "ptvseg/unet.hpp"

#include "ptvseg/rng.hpp"
#include "ptvseg/simd.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ptvseg {

void UNetConfig::validate() const
{
    if (in_channels < 1)
        throw std::invalid_argument("unet config: in_channels must be >= 1");
    if (out_channels < 1)
        throw std::invalid_argument("unet config: out_channels must be >= 1");
    if (base_channels < 1)
        throw std::invalid_argument("unet config: base_channels must be >= 1");
    if (depth < 1)
        throw std::invalid_argument("unet config: depth must be >= 1");
    if (depth > 16)
        throw std::invalid_argument("unet config: depth " + std::to_string(depth) + " is unreasonably large");
}

std::size_t LayerSpec::kernel_extent() const
{
    switch (kind)
    {
        case LayerKind::Conv3x3: return 3;
        case LayerKind::UpConv2x2: return 2;
        case LayerKind::Conv1x1: return 1;
    }
    return 0;
}

std::size_t LayerSpec::parameter_count() const
{
    const std::size_t k = kernel_extent();
    return k * k * in_channels * out_channels + out_channels;
}

std::vector<LayerSpec> layer_plan(const UNetConfig& config)
{
    config.validate();
    std::vector<LayerSpec> plan;
    std::size_t channels = config.in_channels;
    for (std::size_t level = 0; level <= config.depth; ++level)
    {
        const std::size_t width = config.base_channels << level;
        plan.push_back({LayerKind::Conv3x3, channels, width});
        plan.push_back({LayerKind::Conv3x3, width, width});
        channels = width;
    }
    for (std::size_t level = config.depth; level-- > 0;)
    {
        const std::size_t width = config.base_channels << level;
        plan.push_back({LayerKind::UpConv2x2, channels, width});
        plan.push_back({LayerKind::Conv3x3, 2 * width, width});
        plan.push_back({LayerKind::Conv3x3, width, width});
        channels = width;
    }
    plan.push_back({LayerKind::Conv1x1, channels, config.out_channels});
    return plan;
}

std::size_t conv_layer_count(const UNetConfig& config)
{
    return layer_plan(config).size();
}

std::size_t parameter_count(const UNetConfig& config)
{
    std::size_t total = 0;
    for (const auto& layer : layer_plan(config))
        total += layer.parameter_count();
    return total;
}

std::size_t output_extent(const UNetConfig& config, std::size_t input_extent)
{
    config.validate();
    const std::size_t shrink = config.padding == Padding::Same ? 0 : 2;
    auto conv = [&](std::size_t n) {
        if (n <= shrink)
            throw std::invalid_argument("unet: extent " + std::to_string(n) + " too small for a 3x3 convolution");
        return n - shrink;
    };
    std::size_t n = input_extent;
    std::vector<std::size_t> skips;
    for (std::size_t level = 0; level < config.depth; ++level)
    {
        n = conv(conv(n));
        if (n % 2 != 0)
            throw std::invalid_argument("unet: extent " + std::to_string(input_extent) +
                                        " reaches odd extent " + std::to_string(n) + " at pooling level " +
                                        std::to_string(level));
        skips.push_back(n);
        n /= 2;
    }
    n = conv(conv(n));
    for (std::size_t level = config.depth; level-- > 0;)
    {
        n *= 2;
        if (skips[level] < n)
            throw std::invalid_argument("unet: skip extent smaller than upsampled extent");
        n = conv(conv(n));
    }
    return n;
}

std::size_t UNetModel::parameter_count() const
{
    std::size_t total = 0;
    for (const auto& layer : layers)
        total += layer.parameter_count();
    return total;
}

std::vector<double> init_weights(const Shape& weight_shape, std::size_t fan_in, std::uint64_t seed)
{
    if (fan_in == 0)
        throw std::invalid_argument("init_weights: fan_in must be positive");
    std::size_t n = 1;
    for (auto d : weight_shape)
        n *= d;
    Rng rng(seed);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    std::vector<double> values(n);
    for (auto& v : values)
        v = stddev * rng.normal();
    return values;
}

UNetModel build_unet(const UNetConfig& config, std::uint64_t seed)
{
    UNetModel model{config, seed, {}};
    const auto plan = layer_plan(config);
    model.layers.reserve(plan.size());
    for (std::size_t i = 0; i < plan.size(); ++i)
    {
        const auto& spec = plan[i];
        const std::size_t k = spec.kernel_extent();
        const std::size_t fan_in = spec.kind == LayerKind::UpConv2x2 ? spec.in_channels : spec.in_channels * k * k;
        const Shape shape{spec.out_channels, spec.in_channels, k, k};
        const std::uint64_t layer_seed = Rng::derive(seed, i)();
        model.layers.push_back(ConvKernel{Tensor(shape, init_weights(shape, fan_in, layer_seed)),
                                          Tensor({spec.out_channels})});
    }
    return model;
}

ParameterSet zeros_like(const ParameterSet& params)
{
    ParameterSet out;
    out.reserve(params.size());
    for (const auto& p : params)
        out.push_back(ConvKernel{Tensor(p.weights.shape()), Tensor(p.bias.shape())});
    return out;
}

void accumulate(ParameterSet& into, const ParameterSet& other, double scale)
{
    if (into.size() != other.size())
        throw ShapeError("accumulate: parameter sets differ in layer count");
    const auto& k = simd::kernels();
    for (std::size_t i = 0; i < into.size(); ++i)
    {
        if (into[i].weights.shape() != other[i].weights.shape() || into[i].bias.shape() != other[i].bias.shape())
            throw ShapeError("accumulate: layer " + std::to_string(i) + " shapes differ");
        k.axpy(scale, other[i].weights.data(), into[i].weights.data(), into[i].weights.size());
        k.axpy(scale, other[i].bias.data(), into[i].bias.data(), into[i].bias.size());
    }
}

namespace {

void check_input(const UNetModel& model, const Tensor& image)
{
    if (image.rank() != 3)
        throw ShapeError("unet_forward: image must be [c,H,W], got " + shape_to_string(image.shape()));
    if (image.dim(0) != model.config.in_channels)
        throw ShapeError("unet_forward: axis 'channels' expected " + std::to_string(model.config.in_channels) +
                         ", got " + std::to_string(image.dim(0)));
    if (model.layers.size() != conv_layer_count(model.config))
        throw std::invalid_argument("unet_forward: model has " + std::to_string(model.layers.size()) +
                                    " layers, config requires " + std::to_string(conv_layer_count(model.config)));
    if (model.config.padding == Padding::Same)
    {
        const std::size_t divisor = std::size_t{1} << model.config.depth;
        for (std::size_t axis = 1; axis < 3; ++axis)
            if (image.dim(axis) % divisor != 0)
                throw ShapeError(std::string("unet_forward: axis '") + (axis == 1 ? "height" : "width") + "' " +
                                 std::to_string(image.dim(axis)) + " not divisible by " + std::to_string(divisor));
    }
    else
    {
        output_extent(model.config, image.dim(1));
        output_extent(model.config, image.dim(2));
    }
}

std::size_t decoder_base(std::size_t depth, std::size_t step)
{
    return 2 * depth + 2 + 3 * step;
}

// Runs the network. With a cache, records everything the backward pass needs.
Tensor run_forward(const UNetModel& model, const Tensor& image, ForwardCache* cache)
{
    check_input(model, image);
    const std::size_t depth = model.config.depth;
    const Padding padding = model.config.padding;
    const auto& L = model.layers;

    if (cache)
    {
        cache->layer_inputs.assign(L.size(), Tensor());
        cache->pre_activations.assign(L.size(), Tensor());
        cache->pools.clear();
        cache->skip_shapes.clear();
    }

    auto conv_relu = [&](Tensor x, std::size_t layer) {
        Tensor z = conv2d_forward(x, L[layer], padding);
        Tensor y = relu_forward(z);
        if (cache)
        {
            cache->layer_inputs[layer] = std::move(x);
            cache->pre_activations[layer] = std::move(z);
        }
        return y;
    };

    Tensor x = image;
    std::vector<Tensor> skips;
    for (std::size_t level = 0; level < depth; ++level)
    {
        x = conv_relu(std::move(x), 2 * level);
        x = conv_relu(std::move(x), 2 * level + 1);
        PoolResult pooled = maxpool2x2_forward(x);
        if (cache)
        {
            cache->pools.push_back(std::move(pooled.indices));
            cache->skip_shapes.push_back(x.shape());
        }
        skips.push_back(std::move(x));
        x = std::move(pooled.output);
    }
    x = conv_relu(std::move(x), 2 * depth);
    x = conv_relu(std::move(x), 2 * depth + 1);

    for (std::size_t step = 0; step < depth; ++step)
    {
        const std::size_t level = depth - 1 - step;
        const std::size_t base = decoder_base(depth, step);
        Tensor up = upconv2x2_forward(x, L[base]);
        if (cache)
            cache->layer_inputs[base] = std::move(x);
        x = concat_channels(up, skips[level]);
        skips[level] = Tensor();
        x = conv_relu(std::move(x), base + 1);
        x = conv_relu(std::move(x), base + 2);
    }

    const std::size_t last = L.size() - 1;
    Tensor logits = conv2d_forward(x, L[last], Padding::Valid);
    if (cache)
        cache->layer_inputs[last] = std::move(x);
    return logits;
}

}  // namespace

ForwardResult unet_forward(const UNetModel& model, const Tensor& image)
{
    ForwardResult result;
    result.logits = run_forward(model, image, &result.cache);
    result.probabilities = sigmoid_forward(result.logits);
    result.cache.probabilities = result.probabilities;
    return result;
}

Tensor unet_infer_logits(const UNetModel& model, const Tensor& image)
{
    return run_forward(model, image, nullptr);
}

ParameterSet unet_backward(const UNetModel& model, const ForwardCache& cache, const Tensor& grad_probabilities)
{
    return unet_backward_logits(model, cache, sigmoid_backward(cache.probabilities, grad_probabilities));
}

ParameterSet unet_backward_logits(const UNetModel& model, const ForwardCache& cache, const Tensor& grad_logits)
{
    const std::size_t depth = model.config.depth;
    const Padding padding = model.config.padding;
    const auto& L = model.layers;
    if (cache.layer_inputs.size() != L.size())
        throw std::invalid_argument("unet_backward: cache does not belong to this model");

    ParameterSet grads(L.size());
    auto store = [&](std::size_t layer, ConvGradients& g) {
        grads[layer] = ConvKernel{std::move(g.grad_weights), std::move(g.grad_bias)};
        return std::move(g.grad_input);
    };
    auto relu_conv_back = [&](Tensor g, std::size_t layer) {
        g = relu_backward(cache.pre_activations[layer], g);
        ConvGradients cg = conv2d_backward(cache.layer_inputs[layer], L[layer], g, padding);
        return store(layer, cg);
    };

    const std::size_t last = L.size() - 1;
    ConvGradients final_grads = conv2d_backward(cache.layer_inputs[last], L[last], grad_logits, Padding::Valid);
    Tensor g = store(last, final_grads);

    std::vector<Tensor> skip_grads(depth);
    for (std::size_t step = depth; step-- > 0;)
    {
        const std::size_t level = depth - 1 - step;
        const std::size_t base = decoder_base(depth, step);
        g = relu_conv_back(std::move(g), base + 2);
        g = relu_conv_back(std::move(g), base + 1);
        auto [grad_up, grad_skip] = concat_channels_backward(g, L[base].out_channels(), cache.skip_shapes[level]);
        skip_grads[level] = std::move(grad_skip);
        ConvGradients ug = upconv2x2_backward(cache.layer_inputs[base], L[base], grad_up);
        g = store(base, ug);
    }

    g = relu_conv_back(std::move(g), 2 * depth + 1);
    g = relu_conv_back(std::move(g), 2 * depth);

    for (std::size_t level = depth; level-- > 0;)
    {
        g = maxpool2x2_backward(cache.pools[level], g);
        simd::kernels().axpy(1.0, skip_grads[level].data(), g.data(), g.size());
        g = relu_conv_back(std::move(g), 2 * level + 1);
        g = relu_conv_back(std::move(g), 2 * level);
    }
    return grads;
}

}  // namespace ptvseg
