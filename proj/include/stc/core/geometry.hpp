#pragma once

#include "stc/core/types.hpp"

namespace stc {

// Scales width and height by `factor` about the box center, then clamps to
// [0, image_w] x [0, image_h]. Requires a valid box, factor >= 1 and
// positive image dimensions; throws std::invalid_argument otherwise.
BoundingBox expand_bbox(const BoundingBox& box, double factor, double image_w,
                        double image_h);

}  // namespace stc
