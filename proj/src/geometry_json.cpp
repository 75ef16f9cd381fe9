#include "bpim2col/geometry_json.hpp"

#include <optional>
#include <string>

namespace bpim2col {
namespace {

std::optional<Index> field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) {
    throw InvalidGeometry(std::string("layer field '") + key + "' must be an integer");
  }
  return v.get<Index>();
}

Index axis_field(const nlohmann::json& j, const char* key, const char* square_key) {
  if (auto v = field(j, key)) return *v;
  if (auto v = field(j, square_key)) return *v;
  throw InvalidGeometry(std::string("layer is missing '") + key + "' (or '" + square_key + "')");
}

Index required(const nlohmann::json& j, const char* key) {
  if (auto v = field(j, key)) return *v;
  throw InvalidGeometry(std::string("layer is missing '") + key + "'");
}

}  // namespace

RawGeometry raw_geometry_from_json(const nlohmann::json& j, Index default_batch) {
  if (!j.is_object()) throw InvalidGeometry("layer description must be a JSON object");
  RawGeometry raw;
  raw.batch = field(j, "B").value_or(default_batch);
  raw.in_channels = required(j, "C");
  raw.out_channels = required(j, "N");
  raw.stride = required(j, "S");
  raw.in_height = axis_field(j, "H_i", "H");
  raw.in_width = axis_field(j, "W_i", "H");
  raw.kernel_h = axis_field(j, "K_h", "K");
  raw.kernel_w = axis_field(j, "K_w", "K");
  raw.pad_h = axis_field(j, "P_h", "P");
  raw.pad_w = axis_field(j, "P_w", "P");
  return raw;
}

nlohmann::json raw_geometry_to_json(const RawGeometry& raw) {
  return {{"B", raw.batch},        {"C", raw.in_channels}, {"H_i", raw.in_height},
          {"W_i", raw.in_width},   {"N", raw.out_channels}, {"K_h", raw.kernel_h},
          {"K_w", raw.kernel_w},   {"S", raw.stride},       {"P_h", raw.pad_h},
          {"P_w", raw.pad_w}};
}

}  // namespace bpim2col
