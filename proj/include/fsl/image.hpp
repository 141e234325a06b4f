/*
 * Copyright 2026 The fewshot-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FSL_IMAGE_HPP
#define FSL_IMAGE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "fsl/tensor.hpp"

namespace fsl {

// 8-bit grayscale, row-major; 255 is white background.
struct GrayImage
{
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  bool operator==(const GrayImage&) const = default;
};

// Any PNG color type is converted to 8-bit gray. Throws IoError.
GrayImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const GrayImage& image);

// Square S x S page -> [1,28,28] area average, ink = 1 - gray/255. Each
// output cell is an exact integer-weighted sum divided once, so the result
// does not depend on summation order.
Tensor preprocess(const GrayImage& image, std::size_t size = 28);

// Counter-clockwise quarter turns of a square image.
GrayImage rotate90(const GrayImage& image, unsigned quarter_turns);
// Same for a [C,H,H] tensor.
Tensor rotate90(const Tensor& image, unsigned quarter_turns);
// In-place variant over one H x H plane.
void rotate90(const double* src, double* dst, std::size_t side, unsigned quarter_turns);

} // namespace fsl

#endif // FSL_IMAGE_HPP
