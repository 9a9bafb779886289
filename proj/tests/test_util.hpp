// Copyright 2026 The dargan-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "dargan/common.hpp"
#include "dargan/nn.hpp"

namespace dargan::testing {

inline std::filesystem::path TempDir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dargan_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::vector<double> RandomVector(std::size_t n, std::uint64_t seed,
                                        double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.Uniform(-1.0, 1.0);
  return v;
}

inline nn::Tensor RandomTensor(const nn::Shape& s, std::uint64_t seed,
                               double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  nn::Tensor t(s);
  for (auto& x : t.data) x = rng.Uniform(lo, hi);
  return t;
}

// Writes a WAV header with arbitrary fields followed by `frames` zero frames.
inline void WriteRawWav(const std::filesystem::path& path, std::uint16_t format,
                        std::uint16_t channels, std::uint32_t rate,
                        std::uint16_t bits, std::uint32_t frames) {
  std::ofstream os(path, std::ios::binary);
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  auto u16 = [&](std::uint16_t v) {
    os.put(static_cast<char>(v & 0xff));
    os.put(static_cast<char>(v >> 8));
  };
  const std::uint32_t block = channels * bits / 8;
  const std::uint32_t data = frames * block;
  os.write("RIFF", 4);
  u32(36 + data);
  os.write("WAVEfmt ", 8);
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * block);
  u16(static_cast<std::uint16_t>(block));
  u16(bits);
  os.write("data", 4);
  u32(data);
  for (std::uint32_t i = 0; i < data; ++i) os.put(0);
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;
  int checked = 0;
};

// Compares analytic parameter gradients of loss() with central differences.
// Checks at most `per_param` entries of every parameter tensor.
inline GradCheckResult CheckParamGradients(nn::ParamSet& params,
                                           const std::function<nn::Var()>& loss,
                                           double step = 1e-4,
                                           int per_param = 6) {
  params.SetRequiresGrad(true);
  params.ZeroGrad();
  nn::Backward(loss());
  GradCheckResult res;
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Var p = params.At(i);
    const nn::Buffer analytic = p.grad();
    const std::size_t n = p.value().numel();
    const std::size_t stride = std::max<std::size_t>(1, n / per_param);
    for (std::size_t k = 0; k < n; k += stride) {
      double& x = p.mutable_value().data[k];
      const double saved = x;
      x = saved + step;
      const double up = loss().item();
      x = saved - step;
      const double down = loss().item();
      x = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic.empty() ? 0.0 : analytic[k];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      ++res.checked;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst = params.names()[i] + "[" + std::to_string(k) + "] analytic " +
                    std::to_string(a) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return res;
}

// Smooth scalar probe: sum_i c_i * x_i^2 with fixed random c_i.
inline nn::Var WeightedSquares(const nn::Var& x, std::uint64_t seed) {
  const nn::Var c = nn::Constant(RandomTensor(x.shape(), seed, 0.5, 1.5));
  return nn::Sum(nn::Mul(c, nn::Square(x)));
}

}  // namespace dargan::testing
