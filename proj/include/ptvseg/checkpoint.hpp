#pragma once

#include "ptvseg/unet.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptvseg {

class CheckpointError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

// Checkpoint layout, all integers little-endian uint64, reals IEEE-754 binary64 LE:
//   magic "PTVSEGCK", format version (1),
//   in_channels, out_channels, base_channels, depth, padding (0 same, 1 valid), seed,
//   layer count, then per layer: weights tensor, bias tensor,
//   where a tensor is rank, extents..., values...
inline constexpr std::uint64_t kCheckpointVersion = 1;

std::vector<unsigned char> serialize_checkpoint(const UNetModel& model);
UNetModel deserialize_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const UNetModel& model, const std::filesystem::path& path);
UNetModel load_checkpoint(const std::filesystem::path& path);

}  // namespace ptvseg
