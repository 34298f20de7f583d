#include "frozenseg/maps.hpp"

#include "frozenseg/errors.hpp"

namespace frozenseg {

void PanopticMap::validate() const {
  if (segment_ids.size() != static_cast<std::size_t>(height) * width) {
    throw DataError("panoptic map has " + std::to_string(segment_ids.size()) + " pixels, expected " +
                    std::to_string(height * width));
  }
  for (int id : segment_ids) {
    if (id == kVoid) continue;
    if (id < 0 || static_cast<std::size_t>(id) >= segments.size()) {
      throw DataError("panoptic pixel references unknown segment " + std::to_string(id));
    }
  }
}

SemanticMap PanopticMap::semantic() const {
  SemanticMap s{height, width, std::vector<int>(segment_ids.size(), kVoid)};
  for (std::size_t p = 0; p < segment_ids.size(); ++p)
    if (segment_ids[p] != kVoid) s.labels[p] = segments[segment_ids[p]].class_id;
  return s;
}

Matrix PanopticMap::segment_masks() const {
  Matrix m(segments.size(), segment_ids.size());
  for (std::size_t p = 0; p < segment_ids.size(); ++p)
    if (segment_ids[p] != kVoid) m(segment_ids[p], p) = 1.0;
  return m;
}

}  // namespace frozenseg
