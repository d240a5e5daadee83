#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ptvseg {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

/// Raised when operand extents do not fit an operation; the message names the axis.
class ShapeError : public std::invalid_argument
{
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major array of doubles. Rank-3 tensors are laid out [channel, row, column].
class Tensor
{
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // [c, y, x] access for rank-3 tensors.
    double& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const { return data_[(c * shape_[1] + y) * shape_[2] + x]; }

    /// Pointer to channel c of a rank-3 tensor.
    double* channel(std::size_t c) { return data_.data() + c * shape_[1] * shape_[2]; }
    const double* channel(std::size_t c) const { return data_.data() + c * shape_[1] * shape_[2]; }

    void fill(double value);
    bool all_finite() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

enum class Padding { Same, Valid };

/// Convolution parameters: weights [c_out, c_in, kh, kw], bias [c_out].
/// For the 2x2 up-convolution the same layout is used.
struct ConvKernel
{
    Tensor weights;
    Tensor bias;

    std::size_t out_channels() const { return weights.dim(0); }
    std::size_t in_channels() const { return weights.dim(1); }
    std::size_t kernel_h() const { return weights.dim(2); }
    std::size_t kernel_w() const { return weights.dim(3); }
    std::size_t parameter_count() const { return weights.size() + bias.size(); }

    friend bool operator==(const ConvKernel&, const ConvKernel&) = default;
};

ConvKernel make_kernel(std::size_t c_out, std::size_t c_in, std::size_t kh, std::size_t kw);

struct ConvGradients
{
    Tensor grad_input;
    Tensor grad_weights;
    Tensor grad_bias;
};

/// 2D cross-correlation. Same padding zero-pads (k-1)/2 on each side and requires an odd kernel.
Tensor conv2d_forward(const Tensor& input, const ConvKernel& kernel, Padding padding);

/// Gradients of sum(grad_out * conv2d_forward(input, kernel)) with respect to every argument.
ConvGradients conv2d_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_out,
                              Padding padding);

struct PoolIndices
{
    Shape input_shape;
    /// Flat index into the input for every output cell.
    std::vector<std::uint32_t> argmax;

    friend bool operator==(const PoolIndices&, const PoolIndices&) = default;
};

struct PoolResult
{
    Tensor output;
    PoolIndices indices;
};

/// Disjoint 2x2 max pooling. Ties go to the first element in row-major order.
PoolResult maxpool2x2_forward(const Tensor& input);
Tensor maxpool2x2_backward(const PoolIndices& indices, const Tensor& grad_out);

/// Transposed convolution, stride 2, 2x2 kernel [c_out, c_in, 2, 2]: out[co, 2y+a, 2x+b] =
/// bias[co] + sum_ci in[ci, y, x] * w[co, ci, a, b].
Tensor upconv2x2_forward(const Tensor& input, const ConvKernel& kernel);
ConvGradients upconv2x2_backward(const Tensor& input, const ConvKernel& kernel, const Tensor& grad_out);

/// Center crop of a [c,H',W'] tensor to [c,H,W]. When the excess is odd the extra
/// row (column) is removed from the bottom (right).
Tensor center_crop(const Tensor& t, std::size_t height, std::size_t width);

/// Inverse of center_crop for gradients: embeds t into a zero tensor of the larger extent.
Tensor center_embed(const Tensor& t, std::size_t height, std::size_t width);

/// Stacks channels of a, then the center-cropped channels of b.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Splits a concat gradient back into (grad_a, grad_b) with b's original shape.
std::pair<Tensor, Tensor> concat_channels_backward(const Tensor& grad_out, std::size_t a_channels,
                                                   const Shape& b_shape);

Tensor relu_forward(const Tensor& x);
/// Uses the forward input; the derivative at exactly 0 is 0.
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

double sigmoid(double x);
Tensor sigmoid_forward(const Tensor& x);
/// Uses the forward output y = sigmoid(x).
Tensor sigmoid_backward(const Tensor& y, const Tensor& grad_out);

}  // namespace ptvseg
