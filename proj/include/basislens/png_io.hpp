// Copyright 2026 The BasisLens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "basislens/tensor.hpp"

namespace basislens {

// 8-bit RGB. Tensor layout [3,H,W] with values in [0,1]; writes round to the
// nearest of 256 levels.
void write_png_rgb(const std::filesystem::path& path, const Tensor& image);
Tensor read_png_rgb(const std::filesystem::path& path);

// 16-bit grayscale, raw sample values.
void write_png_gray16(const std::filesystem::path& path, std::size_t height, std::size_t width,
                      const std::vector<std::uint16_t>& samples);
std::vector<std::uint16_t> read_png_gray16(const std::filesystem::path& path, std::size_t& height,
                                           std::size_t& width);

}  // namespace basislens
