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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "detkit/eval.hpp"
#include "detkit/nms.hpp"

namespace detkit {

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);

inline constexpr std::string_view kDetectionsCsvHeader = "image_id,class_id,x1,y1,x2,y2,p_cls,p_iou";

/// Throws ConfigError on a malformed header, row or value.
std::vector<Detection> parse_detections_csv(std::string_view text);
std::string detections_to_csv(std::span<const Detection> dets);

/// {"images": [ids], "annotations": [{"image_id", "class_id", "bbox": [x1, y1, x2, y2]}]}
struct GroundTruthSet {
  std::vector<std::int64_t> image_ids;
  std::vector<GroundTruth> annotations;
};

GroundTruthSet parse_ground_truth_json(std::string_view text);
std::string ground_truth_to_json(const GroundTruthSet& gts);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace detkit
