#pragma once

#include <filesystem>
#include <memory>

#include "volscan/models.hpp"

namespace volscan {

// VSCK checkpoint: magic "VSCK", version u16 LE = 1, u32 LE config-block
// length, config block of "key=value\n" lines (model, filters, input_dims,
// seed), then two sections in the same encoding -- parameters and BN running
// stats: entry count u32 LE; per entry u16 LE name length + name + u8 rank +
// u32 LE dims; total float count u64 LE; f32 LE data in entry order.
// Round-trips are bitwise.

void save_checkpoint(Model<float>& model, const std::filesystem::path& path);
std::unique_ptr<Model<float>> load_checkpoint(const std::filesystem::path& path);

}  // namespace volscan
