#include "stc/core/geometry.hpp"

#include <algorithm>
#include <stdexcept>

namespace stc {

BoundingBox expand_bbox(const BoundingBox& box, double factor, double image_w,
                        double image_h) {
  if (!box.valid())
    throw std::invalid_argument("expand_bbox: degenerate input box");
  if (factor < 1.0)
    throw std::invalid_argument("expand_bbox: factor must be >= 1");
  if (image_w <= 0 || image_h <= 0)
    throw std::invalid_argument("expand_bbox: image dimensions must be positive");

  const double cx = (box.x_min + box.x_max) / 2.0;
  const double cy = (box.y_min + box.y_max) / 2.0;
  const double hw = box.width() / 2.0 * factor;
  const double hh = box.height() / 2.0 * factor;

  BoundingBox out;
  out.x_min = std::max(0.0, cx - hw);
  out.y_min = std::max(0.0, cy - hh);
  out.x_max = std::min(image_w, cx + hw);
  out.y_max = std::min(image_h, cy + hh);
  return out;
}

}  // namespace stc
