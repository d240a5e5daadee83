#include "ptvseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ptvseg {
namespace {

constexpr char kMagic[8] = {'P', 'T', 'V', 'S', 'E', 'G', 'C', 'K'};

class Writer
{
public:
    void u64(std::uint64_t v)
    {
        for (int i = 0; i < 8; ++i)
            bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void tensor(const Tensor& t)
    {
        u64(t.rank());
        for (auto d : t.shape())
            u64(d);
        for (double v : t.values())
            f64(v);
    }

    std::vector<unsigned char> bytes;
};

class Reader
{
public:
    explicit Reader(const std::vector<unsigned char>& b) : bytes_(b) {}

    std::uint64_t u64()
    {
        if (pos_ + 8 > bytes_.size())
            throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    Tensor tensor()
    {
        const std::uint64_t rank = u64();
        if (rank == 0 || rank > 8)
            throw CheckpointError("checkpoint tensor has invalid rank " + std::to_string(rank));
        Shape shape(rank);
        std::uint64_t count = 1;
        for (auto& d : shape)
        {
            d = u64();
            if (d == 0 || d > (std::uint64_t{1} << 32))
                throw CheckpointError("checkpoint tensor has invalid extent " + std::to_string(d));
            count *= d;
        }
        if (count * 8 > bytes_.size() - pos_)
            throw CheckpointError("checkpoint truncated inside tensor " + shape_to_string(shape));
        std::vector<double> values(count);
        for (auto& v : values)
            v = f64();
        return Tensor(std::move(shape), std::move(values));
    }
    void expect_magic()
    {
        if (bytes_.size() < sizeof(kMagic) || std::memcmp(bytes_.data(), kMagic, sizeof(kMagic)) != 0)
            throw CheckpointError("not a checkpoint file (bad magic)");
        pos_ = sizeof(kMagic);
    }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    const std::vector<unsigned char>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> serialize_checkpoint(const UNetModel& model)
{
    Writer w;
    w.bytes.assign(std::begin(kMagic), std::end(kMagic));
    w.u64(kCheckpointVersion);
    w.u64(model.config.in_channels);
    w.u64(model.config.out_channels);
    w.u64(model.config.base_channels);
    w.u64(model.config.depth);
    w.u64(model.config.padding == Padding::Same ? 0 : 1);
    w.u64(model.seed);
    w.u64(model.layers.size());
    for (const auto& layer : model.layers)
    {
        w.tensor(layer.weights);
        w.tensor(layer.bias);
    }
    return std::move(w.bytes);
}

UNetModel deserialize_checkpoint(const std::vector<unsigned char>& bytes)
{
    Reader r(bytes);
    r.expect_magic();
    const std::uint64_t version = r.u64();
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    UNetModel model;
    model.config.in_channels = r.u64();
    model.config.out_channels = r.u64();
    model.config.base_channels = r.u64();
    model.config.depth = r.u64();
    const std::uint64_t padding = r.u64();
    if (padding > 1)
        throw CheckpointError("checkpoint has invalid padding code " + std::to_string(padding));
    model.config.padding = padding == 0 ? Padding::Same : Padding::Valid;
    model.seed = r.u64();
    try
    {
        model.config.validate();
    }
    catch (const std::invalid_argument& e)
    {
        throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
    }

    const auto plan = layer_plan(model.config);
    const std::uint64_t layers = r.u64();
    if (layers != plan.size())
        throw CheckpointError("checkpoint has " + std::to_string(layers) + " layers, config requires " +
                              std::to_string(plan.size()));
    for (std::size_t i = 0; i < plan.size(); ++i)
    {
        ConvKernel k{r.tensor(), r.tensor()};
        const std::size_t e = plan[i].kernel_extent();
        if (k.weights.shape() != Shape{plan[i].out_channels, plan[i].in_channels, e, e} ||
            k.bias.shape() != Shape{plan[i].out_channels})
            throw CheckpointError("checkpoint layer " + std::to_string(i) + " has shape " +
                                  shape_to_string(k.weights.shape()) + " inconsistent with its config");
        model.layers.push_back(std::move(k));
    }
    if (!r.at_end())
        throw CheckpointError("checkpoint has trailing bytes");
    return model;
}

void save_checkpoint(const UNetModel& model, const std::filesystem::path& path)
{
    const auto bytes = serialize_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw CheckpointError("cannot open checkpoint for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw CheckpointError("failed writing checkpoint: " + path.string());
}

UNetModel load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw CheckpointError("cannot open checkpoint: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace ptvseg
