/* Copyright 2026 The TreeAlign Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "treealign/box.hpp"

#include <algorithm>
#include <string>

#include "treealign/common.hpp"

namespace treealign {

bool has_positive_area(const Box& b) { return b.x_min < b.x_max && b.y_min < b.y_max; }

bool within_bounds(const Box& b, int width, int height) {
  return b.x_min >= 0 && b.y_min >= 0 && b.x_max <= width && b.y_max <= height;
}

std::int64_t intersection_area(const Box& a, const Box& b) {
  const std::int64_t w =
      std::min(a.x_max, b.x_max) - static_cast<std::int64_t>(std::max(a.x_min, b.x_min));
  const std::int64_t h =
      std::min(a.y_max, b.y_max) - static_cast<std::int64_t>(std::max(a.y_min, b.y_min));
  if (w <= 0 || h <= 0) return 0;
  return w * h;
}

std::pair<std::int64_t, std::int64_t> iou_fraction(const Box& a, const Box& b) {
  if (!has_positive_area(a) || !has_positive_area(b)) {
    throw Error(ErrorCode::kInvalidArgument, "compute_iou: degenerate box");
  }
  const std::int64_t inter = intersection_area(a, b);
  return {inter, a.area() + b.area() - inter};
}

double compute_iou(const Box& a, const Box& b) {
  const auto [inter, uni] = iou_fraction(a, b);
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace treealign
