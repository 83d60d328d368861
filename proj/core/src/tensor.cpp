// Copyright 2026 The detkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "detkit/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "detkit/error.hpp"

namespace detkit {

std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

namespace {

void require_dims(const Shape4& s) {
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
    throw std::invalid_argument("Tensor: all dims must be >= 1, got " + to_string(s));
  }
}

}  // namespace

Tensor::Tensor(Shape4 shape, double fill) : shape_(shape) {
  require_dims(shape_);
  data_.assign(shape_.numel(), fill);
}

Tensor::Tensor(Shape4 shape, std::vector<double> values) : shape_(shape), data_(std::move(values)) {
  require_dims(shape_);
  if (data_.size() != shape_.numel()) {
    throw std::invalid_argument("Tensor: buffer length does not match dims " + to_string(shape_));
  }
}

Tensor Tensor::channel_slice(int begin, int count) const {
  if (begin < 0 || count < 1 || begin + count > shape_.c) {
    throw std::invalid_argument("Tensor::channel_slice: range out of bounds");
  }
  Tensor out({shape_.n, count, shape_.h, shape_.w});
  const std::size_t plane = static_cast<std::size_t>(shape_.h) * shape_.w;
  for (int n = 0; n < shape_.n; ++n) {
    const double* src = &data_[offset(n, begin, 0, 0)];
    std::copy(src, src + plane * static_cast<std::size_t>(count), &out.data_[out.offset(n, 0, 0, 0)]);
  }
  return out;
}

Tensor Tensor::concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) {
    throw std::invalid_argument("Tensor::concat_channels: nothing to concatenate");
  }
  Shape4 s = parts.front().shape();
  int channels = 0;
  for (const auto& p : parts) {
    if (p.shape().n != s.n || p.shape().h != s.h || p.shape().w != s.w) {
      throw std::invalid_argument("Tensor::concat_channels: mismatched shapes");
    }
    channels += p.shape().c;
  }
  s.c = channels;
  Tensor out(s);
  const std::size_t plane = static_cast<std::size_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    int c0 = 0;
    for (const auto& p : parts) {
      const double* src = &p.data_[p.offset(n, 0, 0, 0)];
      std::copy(src, src + plane * static_cast<std::size_t>(p.shape().c), &out.data_[out.offset(n, c0, 0, 0)]);
      c0 += p.shape().c;
    }
  }
  return out;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!(shape_ == other.shape_)) {
    throw std::invalid_argument("Tensor::operator+=: shape mismatch " + to_string(shape_) + " vs " +
                                to_string(other.shape_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    data_[i] += other.data_[i];
  }
  return *this;
}

double Tensor::max_abs_diff(const Tensor& other) const {
  if (!(shape_ == other.shape_)) {
    throw std::invalid_argument("Tensor::max_abs_diff: shape mismatch");
  }
  double m = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    m = std::max(m, std::abs(data_[i] - other.data_[i]));
  }
  return m;
}

void save_tensor(const Tensor& t, const std::filesystem::path& stem) {
  static_assert(sizeof(double) == 8);
  const auto bin = std::filesystem::path(stem).concat(".bin");
  const auto meta = std::filesystem::path(stem).concat(".json");
  {
    std::ofstream os(bin, std::ios::binary | std::ios::trunc);
    if (!os) {
      throw std::runtime_error("save_tensor: cannot open " + bin.string());
    }
    for (double v : t.data()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      unsigned char bytes[8];
      for (int i = 0; i < 8; ++i) {
        bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
      }
      os.write(reinterpret_cast<const char*>(bytes), 8);
    }
  }
  nlohmann::json j;
  const auto& s = t.shape();
  j["dims"] = {s.n, s.c, s.h, s.w};
  j["dtype"] = "f64";
  j["byte_order"] = "little";
  std::ofstream ms(meta, std::ios::trunc);
  if (!ms) {
    throw std::runtime_error("save_tensor: cannot open " + meta.string());
  }
  ms << j.dump(2) << '\n';
}

Tensor load_tensor(const std::filesystem::path& stem) {
  const auto bin = std::filesystem::path(stem).concat(".bin");
  const auto meta = std::filesystem::path(stem).concat(".json");
  std::ifstream ms(meta);
  if (!ms) {
    throw ConfigError("load_tensor: cannot open " + meta.string());
  }
  Shape4 s;
  try {
    const auto j = nlohmann::json::parse(ms);
    if (j.value("dtype", std::string{"f64"}) != "f64" || j.value("byte_order", std::string{"little"}) != "little") {
      throw ConfigError("load_tensor: only little-endian f64 tensors are supported");
    }
    const auto dims = j.at("dims").get<std::vector<int>>();
    if (dims.size() != 4) {
      throw ConfigError("load_tensor: dims must have four entries");
    }
    s = {dims[0], dims[1], dims[2], dims[3]};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("load_tensor: ") + e.what());
  }
  std::ifstream is(bin, std::ios::binary);
  if (!is) {
    throw ConfigError("load_tensor: cannot open " + bin.string());
  }
  std::vector<double> values(s.numel());
  for (auto& v : values) {
    unsigned char bytes[8];
    if (!is.read(reinterpret_cast<char*>(bytes), 8)) {
      throw ConfigError("load_tensor: " + bin.string() + " is shorter than its dims");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) {
      bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    }
    v = std::bit_cast<double>(bits);
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw ConfigError("load_tensor: " + bin.string() + " is longer than its dims");
  }
  return Tensor(s, std::move(values));
}

}  // namespace detkit
