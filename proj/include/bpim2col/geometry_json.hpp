#pragma once

#include <json.hpp>

#include "bpim2col/geometry.hpp"

namespace bpim2col {

// Reads {"B","C","H_i","W_i","N","K_h","K_w","S","P_h","P_w"}. The square
// shorthand keys "H", "K" and "P" set both axes; "B" falls back to
// default_batch. Throws InvalidGeometry on missing or malformed fields.
RawGeometry raw_geometry_from_json(const nlohmann::json& j, Index default_batch);

nlohmann::json raw_geometry_to_json(const RawGeometry& raw);

}  // namespace bpim2col
