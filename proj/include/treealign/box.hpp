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

#pragma once

#include <cstdint>
#include <utility>

namespace treealign {

// Axis-aligned box on the integer cell grid. Max edges are exclusive, so a
// box covers cells x_min..x_max-1 by y_min..y_max-1.
struct Box {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  std::int64_t width() const { return x_max - x_min; }
  std::int64_t height() const { return y_max - y_min; }
  std::int64_t area() const { return width() * height(); }

  friend bool operator==(const Box&, const Box&) = default;
};

// Positive area; says nothing about scene bounds.
bool has_positive_area(const Box& b);
bool within_bounds(const Box& b, int width, int height);

std::int64_t intersection_area(const Box& a, const Box& b);

// IoU as an exact (intersection, union) cell-count pair.
std::pair<std::int64_t, std::int64_t> iou_fraction(const Box& a, const Box& b);

// Intersection over union in [0, 1]. Throws kInvalidArgument on a box with
// zero or negative area.
double compute_iou(const Box& a, const Box& b);

}  // namespace treealign
