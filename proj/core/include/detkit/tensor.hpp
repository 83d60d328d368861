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

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace detkit {

struct Shape4 {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  friend bool operator==(const Shape4&, const Shape4&) = default;
};

std::string to_string(const Shape4& s);

/// Dense row-major NCHW array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 shape, double fill = 0.0);
  Tensor(Shape4 shape, std::vector<double> values);

  const Shape4& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  std::size_t offset(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + static_cast<std::size_t>(c)) * shape_.h +
            static_cast<std::size_t>(h)) *
               shape_.w +
           static_cast<std::size_t>(w);
  }
  double& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

  /// Channels [begin, begin + count).
  Tensor channel_slice(int begin, int count) const;
  static Tensor concat_channels(std::span<const Tensor> parts);

  Tensor& operator+=(const Tensor& other);
  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }

  double max_abs_diff(const Tensor& other) const;

 private:
  Shape4 shape_{};
  std::vector<double> data_;
};

/// Writes `<stem>.bin` (little-endian f64 values) and `<stem>.json`
/// ({"dims": [n, c, h, w], "dtype": "f64", "byte_order": "little"}).
void save_tensor(const Tensor& t, const std::filesystem::path& stem);
Tensor load_tensor(const std::filesystem::path& stem);

}  // namespace detkit
