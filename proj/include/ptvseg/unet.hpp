#pragma once

#include "ptvseg/tensor.hpp"

#include <cstdint>
#include <vector>

namespace ptvseg {

struct UNetConfig
{
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t base_channels = 32;
    std::size_t depth = 4;
    Padding padding = Padding::Same;

    /// Throws std::invalid_argument on an unusable configuration.
    void validate() const;

    friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

enum class LayerKind : std::uint8_t { Conv3x3, UpConv2x2, Conv1x1 };

struct LayerSpec
{
    LayerKind kind;
    std::size_t in_channels;
    std::size_t out_channels;

    std::size_t kernel_extent() const;
    std::size_t parameter_count() const;
};

/// Layer order: encoder pairs (shallow to deep), bottleneck pair, then per decoder level
/// (deep to shallow) an up-convolution and a pair, then the final 1x1 convolution.
std::vector<LayerSpec> layer_plan(const UNetConfig& config);

std::size_t conv_layer_count(const UNetConfig& config);
std::size_t parameter_count(const UNetConfig& config);

/// Spatial extent produced for an input extent, or std::invalid_argument if the extent
/// cannot pass through the network (odd extent at a pooling step, too small for a convolution).
std::size_t output_extent(const UNetConfig& config, std::size_t input_extent);

/// One parameter block per layer, in layer_plan order. Also used for gradients.
using ParameterSet = std::vector<ConvKernel>;

struct UNetModel
{
    UNetConfig config;
    std::uint64_t seed = 0;
    ParameterSet layers;

    std::size_t parameter_count() const;

    friend bool operator==(const UNetModel&, const UNetModel&) = default;
};

/// He-normal weights (std = sqrt(2 / fan_in)) drawn from a seeded xoshiro stream; zero biases.
/// fan_in is c_in*kh*kw for convolutions and c_in for the stride-2 up-convolution, whose
/// output pixels each see one tap per input channel.
std::vector<double> init_weights(const Shape& weight_shape, std::size_t fan_in, std::uint64_t seed);

UNetModel build_unet(const UNetConfig& config, std::uint64_t seed);

/// Zero-valued parameter set shaped like the model's.
ParameterSet zeros_like(const ParameterSet& params);

/// into += scale * other, elementwise.
void accumulate(ParameterSet& into, const ParameterSet& other, double scale = 1.0);

struct ForwardCache
{
    std::vector<Tensor> layer_inputs;     // input of every layer
    std::vector<Tensor> pre_activations;  // conv output before ReLU; empty for un-activated layers
    std::vector<PoolIndices> pools;       // one per encoder level
    std::vector<Shape> skip_shapes;       // one per encoder level
    Tensor probabilities;
};

struct ForwardResult
{
    Tensor probabilities;
    Tensor logits;
    ForwardCache cache;
};

/// image: [in_channels, H, W]. Probabilities are sigmoid(logits), shape [out_channels, H', W'].
ForwardResult unet_forward(const UNetModel& model, const Tensor& image);

/// Logits only; skips building the activation cache.
Tensor unet_infer_logits(const UNetModel& model, const Tensor& image);

/// Gradient of a scalar loss given its gradient on the probability map.
ParameterSet unet_backward(const UNetModel& model, const ForwardCache& cache, const Tensor& grad_probabilities);

/// Same, given the gradient on the logits (the trainer's fused loss path).
ParameterSet unet_backward_logits(const UNetModel& model, const ForwardCache& cache, const Tensor& grad_logits);

}  // namespace ptvseg
