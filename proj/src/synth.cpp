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

#include "fsl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "fsl/error.hpp"

namespace fsl {

namespace {

constexpr std::size_t kVocabulary = 6;

void bezier(const Stroke& s, double t, double& x, double& y)
{
  const double u = 1.0 - t;
  const double b0 = u * u * u, b1 = 3 * u * u * t, b2 = 3 * u * t * t, b3 = t * t * t;
  x = b0 * s.x[0] + b1 * s.x[1] + b2 * s.x[2] + b3 * s.x[3];
  y = b0 * s.y[0] + b1 * s.y[1] + b2 * s.y[2] + b3 * s.y[3];
}

// Stroke shapes of one alphabet, centered on the origin, unit extent.
std::vector<Stroke> vocabulary(const SynthOptions& o, std::size_t alphabet)
{
  Rng rng(derive_seed(o.seed, alphabet));
  const double curl = rng.uniform(0.15, 0.9);
  std::vector<Stroke> out;
  for (std::size_t v = 0; v < kVocabulary; ++v)
  {
    Stroke s;
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double len = rng.uniform(0.6, 1.0);
    s.x[0] = -0.5 * len * std::cos(a);
    s.y[0] = -0.5 * len * std::sin(a);
    s.x[3] = -s.x[0];
    s.y[3] = -s.y[0];
    for (int k = 1; k <= 2; ++k)
    {
      const double t = k / 3.0;
      s.x[k] = s.x[0] + t * (s.x[3] - s.x[0]) + curl * rng.uniform(-1.0, 1.0);
      s.y[k] = s.y[0] + t * (s.y[3] - s.y[0]) + curl * rng.uniform(-1.0, 1.0);
    }
    out.push_back(s);
  }
  return out;
}

std::size_t characters_in(const SynthOptions& o, std::size_t alphabet)
{
  return o.characters / o.alphabets + (alphabet < o.characters % o.alphabets ? 1 : 0);
}

} // namespace

Glyph synth_glyph(const SynthOptions& o, std::size_t alphabet, std::size_t index)
{
  const auto vocab = vocabulary(o, alphabet);
  Rng rng(derive_seed(derive_seed(o.seed, alphabet), 1000 + index));
  Glyph g;
  const std::size_t n = 2 + rng.below(3);
  for (std::size_t i = 0; i < n; ++i)
  {
    const Stroke& base = vocab[rng.below(kVocabulary)];
    const double scale = rng.uniform(0.35, 0.7);
    const double th = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double c = std::cos(th), s = std::sin(th);
    Stroke out;
    for (int k = 0; k < 4; ++k)
    {
      out.x[k] = scale * (c * base.x[k] - s * base.y[k]);
      out.y[k] = scale * (s * base.x[k] + c * base.y[k]);
    }
    double ox, oy;
    if (i > 0 && rng.uniform() < 0.6)
    {
      // Start on the previous stroke.
      double px, py;
      bezier(g.strokes.back(), rng.uniform(), px, py);
      ox = px - out.x[0];
      oy = py - out.y[0];
    }
    else
    {
      ox = rng.uniform(0.3, 0.7);
      oy = rng.uniform(0.3, 0.7);
    }
    for (int k = 0; k < 4; ++k)
    {
      out.x[k] += ox;
      out.y[k] += oy;
    }
    g.strokes.push_back(out);
  }

  // Fit the curve samples into [0.15, 0.85], keeping the aspect ratio.
  double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
  for (const Stroke& s : g.strokes)
    for (int t = 0; t <= 32; ++t)
    {
      double x, y;
      bezier(s, t / 32.0, x, y);
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  const double extent = std::max({x1 - x0, y1 - y0, 1e-6});
  const double fit = 0.7 / extent;
  const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);
  for (Stroke& s : g.strokes)
    for (int k = 0; k < 4; ++k)
    {
      s.x[k] = 0.5 + fit * (s.x[k] - cx);
      s.y[k] = 0.5 + fit * (s.y[k] - cy);
    }
  return g;
}

GrayImage synth_exemplar(const SynthOptions& o, const Glyph& glyph, Rng& rng)
{
  const double rot = 0.1 * rng.normal();
  const double sx = 1.0 + 0.07 * rng.normal(), sy = 1.0 + 0.07 * rng.normal();
  const double shear = 0.05 * rng.normal();
  const double tx = 0.03 * rng.normal(), ty = 0.03 * rng.normal();
  const double pen = rng.uniform(1.8, 3.0);
  const double c = std::cos(rot), s = std::sin(rot);

  GrayImage img;
  img.width = img.height = o.size;
  img.pixels.assign(o.size * o.size, 255);
  const double S = static_cast<double>(o.size);
  const int r = static_cast<int>(std::ceil(pen));

  for (const Stroke& base : glyph.strokes)
  {
    Stroke st;
    for (int k = 0; k < 4; ++k)
    {
      const double x = base.x[k] - 0.5 + o.jitter * rng.normal();
      const double y = base.y[k] - 0.5 + o.jitter * rng.normal();
      const double wx = sx * x + shear * y, wy = sy * y;
      st.x[k] = 0.5 + tx + c * wx - s * wy;
      st.y[k] = 0.5 + ty + s * wx + c * wy;
    }
    double len = 0.0;
    for (int k = 0; k < 3; ++k)
      len += std::hypot(st.x[k + 1] - st.x[k], st.y[k + 1] - st.y[k]);
    const int steps = std::max(8, static_cast<int>(std::ceil(2.0 * len * S)));
    for (int i = 0; i <= steps; ++i)
    {
      double x, y;
      bezier(st, static_cast<double>(i) / steps, x, y);
      const double px = x * S, py = y * S;
      const int cx = static_cast<int>(std::floor(px)), cy = static_cast<int>(std::floor(py));
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx)
        {
          const int X = cx + dx, Y = cy + dy;
          if (X < 0 || Y < 0 || X >= static_cast<int>(o.size) || Y >= static_cast<int>(o.size))
            continue;
          const double ddx = X + 0.5 - px, ddy = Y + 0.5 - py;
          if (ddx * ddx + ddy * ddy <= pen * pen)
            img.at(static_cast<std::size_t>(Y), static_cast<std::size_t>(X)) = 0;
        }
    }
  }
  return img;
}

namespace {

void check(const SynthOptions& o)
{
  if (o.alphabets == 0 || o.characters < o.alphabets || o.exemplars < 2 || o.size < 28)
    throw ConfigError("synth: need alphabets >= 1, characters >= alphabets, exemplars >= 2, "
                      "size >= 28");
  if (o.alphabets > 99 || o.characters / o.alphabets >= 99)
    throw ConfigError("synth: at most 99 alphabets and 98 characters per alphabet");
}

Rng exemplar_rng(const SynthOptions& o, std::size_t serial, std::size_t e)
{
  return Rng(derive_seed(derive_seed(o.seed, 1u << 20 | serial), e));
}

std::string alphabet_name(std::size_t a)
{
  char name[32];
  std::snprintf(name, sizeof(name), "Alphabet_%02zu", a + 1);
  return name;
}

std::string character_name(std::size_t i)
{
  char name[32];
  std::snprintf(name, sizeof(name), "character%02zu", i + 1);
  return name;
}

} // namespace

std::size_t synthesize(const std::filesystem::path& root, const SynthOptions& o)
{
  check(o);
  std::size_t written = 0, serial = 0;
  char name[64];
  for (std::size_t a = 0; a < o.alphabets; ++a)
  {
    const std::filesystem::path alphabet_dir = root / alphabet_name(a);
    for (std::size_t i = 0; i < characters_in(o, a); ++i)
    {
      ++serial;
      const std::filesystem::path dir = alphabet_dir / character_name(i);
      std::error_code ec;
      std::filesystem::create_directories(dir, ec);
      if (ec)
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
      const Glyph g = synth_glyph(o, a, i);
      for (std::size_t e = 0; e < o.exemplars; ++e)
      {
        Rng rng = exemplar_rng(o, serial, e);
        std::snprintf(name, sizeof(name), "%04zu_%02zu.png", serial, e + 1);
        write_png(dir / name, synth_exemplar(o, g, rng));
        ++written;
      }
    }
  }
  return written;
}

ImageBank synth_bank(const SynthOptions& o)
{
  check(o);
  std::vector<ImageBank::ClassInfo> classes;
  std::vector<double> pixels;
  std::size_t serial = 0;
  for (std::size_t a = 0; a < o.alphabets; ++a)
    for (std::size_t i = 0; i < characters_in(o, a); ++i)
    {
      ++serial;
      const Glyph g = synth_glyph(o, a, i);
      classes.push_back({alphabet_name(a), character_name(i), 0, o.exemplars});
      for (std::size_t e = 0; e < o.exemplars; ++e)
      {
        Rng rng = exemplar_rng(o, serial, e);
        const Tensor img = preprocess(synth_exemplar(o, g, rng));
        const auto d = img.data();
        pixels.insert(pixels.end(), d.begin(), d.end());
      }
    }
  return ImageBank::from_pixels(std::move(classes), std::move(pixels));
}

} // namespace fsl
