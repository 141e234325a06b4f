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

#include "fsl/image.hpp"

#include <png.h>

#include <algorithm>
#include <cstring>
#include <string>

#include "fsl/error.hpp"

namespace fsl {

GrayImage read_png(const std::filesystem::path& path)
{
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError("cannot decode " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_GRAY;
  GrayImage out;
  out.width = img.width;
  out.height = img.height;
  out.pixels.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr))
  {
    const std::string message = img.message;
    png_image_free(&img);
    throw IoError("cannot decode " + path.string() + ": " + message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const GrayImage& image)
{
  if (image.pixels.size() != image.width * image.height || image.width == 0)
    throw ContractError("write_png: pixel buffer does not match " + std::to_string(image.width) +
                        "x" + std::to_string(image.height));
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw IoError("cannot write " + path.string() + ": " + img.message);
}

Tensor preprocess(const GrayImage& image, std::size_t size)
{
  const std::size_t S = image.width;
  if (S == 0 || image.height != S)
    throw DimensionError("preprocess: expected a square page, got " + std::to_string(image.width) +
                         "x" + std::to_string(image.height));
  if (size == 0 || size > S)
    throw ContractError("preprocess: cannot area-average " + std::to_string(S) + " to " +
                        std::to_string(size));

  // In units of 1/size source pixels, output cell i spans [i*S, (i+1)*S)
  // and source pixel p spans [p*size, (p+1)*size).
  struct Span
  {
    std::size_t first;
    std::vector<std::uint64_t> weight;
  };
  std::vector<Span> spans(size);
  for (std::size_t i = 0; i < size; ++i)
  {
    const std::size_t lo = i * S, hi = (i + 1) * S;
    const std::size_t p0 = lo / size, p1 = (hi + size - 1) / size;
    spans[i].first = p0;
    for (std::size_t p = p0; p < p1; ++p)
    {
      const std::size_t a = std::max(lo, p * size), b = std::min(hi, (p + 1) * size);
      spans[i].weight.push_back(b > a ? b - a : 0);
    }
  }

  const double denom = 255.0 * static_cast<double>(S) * static_cast<double>(S);
  Tensor out = Tensor::zeros({1, size, size});
  auto y = out.data();
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c)
    {
      std::uint64_t ink = 0;
      const Span& sr = spans[r];
      const Span& sc = spans[c];
      for (std::size_t a = 0; a < sr.weight.size(); ++a)
      {
        std::uint64_t row = 0;
        for (std::size_t b = 0; b < sc.weight.size(); ++b)
          row += sc.weight[b] * (255u - image.at(sr.first + a, sc.first + b));
        ink += sr.weight[a] * row;
      }
      y[r * size + c] = static_cast<double>(ink) / denom;
    }
  return out;
}

GrayImage rotate90(const GrayImage& image, unsigned quarter_turns)
{
  const std::size_t S = image.width;
  if (image.height != S)
    throw DimensionError("rotate90: expected a square image, got " + std::to_string(image.width) +
                         "x" + std::to_string(image.height));
  GrayImage cur = image;
  for (unsigned t = 0; t < quarter_turns % 4; ++t)
  {
    GrayImage next = cur;
    for (std::size_t r = 0; r < S; ++r)
      for (std::size_t c = 0; c < S; ++c)
        next.at(r, c) = cur.at(c, S - 1 - r);
    cur = std::move(next);
  }
  return cur;
}

void rotate90(const double* src, double* dst, std::size_t side, unsigned quarter_turns)
{
  const std::size_t S = side;
  for (std::size_t r = 0; r < S; ++r)
    for (std::size_t c = 0; c < S; ++c)
    {
      std::size_t sr = r, sc = c;
      // Walk the inverse map back through each counter-clockwise turn.
      for (unsigned t = 0; t < quarter_turns % 4; ++t)
      {
        const std::size_t nr = sc, nc = S - 1 - sr;
        sr = nr;
        sc = nc;
      }
      dst[r * S + c] = src[sr * S + sc];
    }
}

Tensor rotate90(const Tensor& image, unsigned quarter_turns)
{
  if (image.rank() != 3 || image.dim(1) != image.dim(2))
    throw DimensionError("rotate90: expected [C,H,H], got " + to_string(image.shape()));
  const std::size_t S = image.dim(1);
  Tensor out = Tensor::zeros(image.shape());
  auto dst = out.data();
  auto src = image.data();
  for (std::size_t ch = 0; ch < image.dim(0); ++ch)
    rotate90(src.data() + ch * S * S, dst.data() + ch * S * S, S, quarter_turns);
  return out;
}

} // namespace fsl
