#include "bpim2col/geometry.hpp"

#include <charconv>
#include <sstream>
#include <tuple>
#include <utility>
#include <vector>

namespace bpim2col {
namespace {

void require(bool ok, const char* constraint, const RawGeometry& raw) {
  if (ok) return;
  std::ostringstream os;
  os << "invalid geometry " << format_layer_shorthand(raw) << " (B=" << raw.batch << "): violates "
     << constraint;
  throw InvalidGeometry(os.str());
}

struct AxisDims {
  Index out, dilated, spaced, rem;
};

AxisDims derive_axis(Index in, Index kernel, Index pad, Index stride) {
  const Index span = in + 2 * pad - kernel;
  AxisDims d{};
  d.out = span / stride + 1;
  d.dilated = d.out + (d.out - 1) * (stride - 1);
  d.spaced = d.dilated + 2 * (kernel - 1 - pad);
  d.rem = span % stride;
  return d;
}

Index parse_count(std::string_view field, std::string_view whole) {
  Index v = 0;
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc{} || ptr != end || field.empty()) {
    throw InvalidGeometry("cannot parse layer shorthand '" + std::string(whole) + "': bad field '" +
                          std::string(field) + "'");
  }
  return v;
}

// "7" -> {7,7}; "7x5" -> {7,5}
std::pair<Index, Index> parse_pair(std::string_view field, std::string_view whole) {
  const auto x = field.find('x');
  if (x == std::string_view::npos) {
    const Index v = parse_count(field, whole);
    return {v, v};
  }
  return {parse_count(field.substr(0, x), whole), parse_count(field.substr(x + 1), whole)};
}

std::string pair_text(Index a, Index b) {
  return a == b ? std::to_string(a) : std::to_string(a) + "x" + std::to_string(b);
}

}  // namespace

LayerGeometry LayerGeometry::derive(const RawGeometry& raw) {
  require(raw.batch > 0, "B > 0", raw);
  require(raw.in_channels > 0, "C > 0", raw);
  require(raw.in_height > 0 && raw.in_width > 0, "H_i, W_i > 0", raw);
  require(raw.out_channels > 0, "N > 0", raw);
  require(raw.kernel_h > 0 && raw.kernel_w > 0, "K_h, K_w > 0", raw);
  require(raw.stride > 0, "S > 0", raw);
  require(raw.pad_h >= 0 && raw.pad_w >= 0, "P_h, P_w >= 0", raw);
  require(raw.kernel_h - 1 - raw.pad_h >= 0, "K_h - 1 - P_h >= 0", raw);
  require(raw.kernel_w - 1 - raw.pad_w >= 0, "K_w - 1 - P_w >= 0", raw);
  require(raw.in_height + 2 * raw.pad_h >= raw.kernel_h, "H_i + 2 P_h >= K_h", raw);
  require(raw.in_width + 2 * raw.pad_w >= raw.kernel_w, "W_i + 2 P_w >= K_w", raw);

  LayerGeometry g;
  g.raw_ = raw;
  const AxisDims h = derive_axis(raw.in_height, raw.kernel_h, raw.pad_h, raw.stride);
  const AxisDims w = derive_axis(raw.in_width, raw.kernel_w, raw.pad_w, raw.stride);
  g.out_h_ = h.out;
  g.out_w_ = w.out;
  g.dilated_h_ = h.dilated;
  g.dilated_w_ = w.dilated;
  g.spaced_h_ = h.spaced;
  g.spaced_w_ = w.spaced;
  g.rem_h_ = h.rem;
  g.rem_w_ = w.rem;
  return g;
}

RawGeometry parse_layer_shorthand(std::string_view text, Index batch) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto slash = text.find('/', start);
    fields.push_back(text.substr(start, slash - start));
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }
  if (fields.size() != 6) {
    throw InvalidGeometry("layer shorthand '" + std::string(text) +
                          "' must have six fields H/C/N/K/S/P");
  }
  RawGeometry raw;
  raw.batch = batch;
  std::tie(raw.in_height, raw.in_width) = parse_pair(fields[0], text);
  raw.in_channels = parse_count(fields[1], text);
  raw.out_channels = parse_count(fields[2], text);
  std::tie(raw.kernel_h, raw.kernel_w) = parse_pair(fields[3], text);
  raw.stride = parse_count(fields[4], text);
  std::tie(raw.pad_h, raw.pad_w) = parse_pair(fields[5], text);
  return raw;
}

std::string format_layer_shorthand(const RawGeometry& raw) {
  std::ostringstream os;
  os << pair_text(raw.in_height, raw.in_width) << '/' << raw.in_channels << '/' << raw.out_channels
     << '/' << pair_text(raw.kernel_h, raw.kernel_w) << '/' << raw.stride << '/'
     << pair_text(raw.pad_h, raw.pad_w);
  return os.str();
}

}  // namespace bpim2col
