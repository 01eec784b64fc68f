#pragma once

#include <string>
#include <vector>

#include "lmk/geometry.hpp"

namespace lmk {

/// An image with J annotated landmarks. `landmarks.valid` carries visibility.
struct AnnotatedExample {
  std::string id;
  Image image;
  LandmarkSet landmarks;
};

using Dataset = std::vector<AnnotatedExample>;

}  // namespace lmk
