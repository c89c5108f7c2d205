#pragma once

#include <filesystem>
#include <string>

#include "effuse/tensor.hpp"

namespace effuse {

// Tensor dump format, shared repo-wide: magic "EFT1", u32 rank, one u32 per
// extent (little-endian), then the row-major payload as little-endian 64-bit
// reals.
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path, bool requires_grad = false);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace effuse
