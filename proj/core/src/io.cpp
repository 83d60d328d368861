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

#include "detkit/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <system_error>

#include <nlohmann/json.hpp>

#include "detkit/error.hpp"

namespace detkit {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc{}) {
    throw std::runtime_error("format_double: conversion failed");
  }
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  field = trim(field);
  T v{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw ConfigError("detections CSV line " + std::to_string(line_no) + ": cannot parse '" + std::string(field) +
                      "'");
  }
  return v;
}

}  // namespace

std::vector<Detection> parse_detections_csv(std::string_view text) {
  std::vector<Detection> out;
  std::size_t line_no = 0;
  bool header = true;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (header) {
      if (line != kDetectionsCsvHeader) {
        throw ConfigError("detections CSV: expected header '" + std::string(kDetectionsCsvHeader) + "'");
      }
      header = false;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 8) {
      throw ConfigError("detections CSV line " + std::to_string(line_no) + ": expected 8 fields");
    }
    Detection d;
    d.image_id = parse_number<std::int64_t>(f[0], line_no);
    d.class_id = parse_number<int>(f[1], line_no);
    d.box = {parse_number<double>(f[2], line_no), parse_number<double>(f[3], line_no),
             parse_number<double>(f[4], line_no), parse_number<double>(f[5], line_no)};
    d.p_cls = parse_number<double>(f[6], line_no);
    d.p_iou = parse_number<double>(f[7], line_no);
    try {
      d.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("detections CSV line " + std::to_string(line_no) + ": " + e.what());
    }
    out.push_back(d);
    if (end == text.size()) break;
  }
  if (header) {
    throw ConfigError("detections CSV: missing header");
  }
  return out;
}

std::string detections_to_csv(std::span<const Detection> dets) {
  std::string s(kDetectionsCsvHeader);
  s += '\n';
  for (const auto& d : dets) {
    s += std::to_string(d.image_id) + ',' + std::to_string(d.class_id) + ',' + format_double(d.box.x1) + ',' +
         format_double(d.box.y1) + ',' + format_double(d.box.x2) + ',' + format_double(d.box.y2) + ',' +
         format_double(d.p_cls) + ',' + format_double(d.p_iou) + '\n';
  }
  return s;
}

GroundTruthSet parse_ground_truth_json(std::string_view text) {
  GroundTruthSet gts;
  try {
    const auto j = nlohmann::json::parse(text);
    gts.image_ids = j.at("images").get<std::vector<std::int64_t>>();
    for (const auto& a : j.at("annotations")) {
      const auto bb = a.at("bbox").get<std::vector<double>>();
      if (bb.size() != 4) {
        throw ConfigError("ground truth JSON: bbox must have four entries");
      }
      GroundTruth g{a.at("image_id").get<std::int64_t>(), a.at("class_id").get<int>(), {bb[0], bb[1], bb[2], bb[3]}};
      if (!g.box.valid()) {
        throw ConfigError("ground truth JSON: invalid bbox");
      }
      gts.annotations.push_back(g);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ground truth JSON: ") + e.what());
  }
  return gts;
}

std::string ground_truth_to_json(const GroundTruthSet& gts) {
  nlohmann::json j;
  j["images"] = gts.image_ids;
  j["annotations"] = nlohmann::json::array();
  for (const auto& g : gts.annotations) {
    j["annotations"].push_back(
        {{"image_id", g.image_id}, {"class_id", g.class_id}, {"bbox", {g.box.x1, g.box.y1, g.box.x2, g.box.y2}}});
  }
  return j.dump(2);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw ConfigError("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) {
      throw std::runtime_error("cannot write " + tmp.string());
    }
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) {
      throw std::runtime_error("short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw std::runtime_error("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
  }
}

}  // namespace detkit
