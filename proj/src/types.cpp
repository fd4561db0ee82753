#include "funface/types.hpp"

#include <array>
#include <cmath>
#include <utility>

namespace funface {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 7> kVariantNames{{
    {Variant::kCE, "ce"},
    {Variant::kSphere, "sphere"},
    {Variant::kArc, "arc"},
    {Variant::kCos, "cos"},
    {Variant::kGeneralized, "generalized"},
    {Variant::kAdaFace, "adaface"},
    {Variant::kFunFace, "funface"},
}};

}  // namespace

std::string_view to_string(Variant v) {
  for (const auto& [var, name] : kVariantNames)
    if (var == v) return name;
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (const auto& [var, n] : kVariantNames)
    if (n == name) return var;
  std::string valid;
  for (const auto& [var, n] : kVariantNames) {
    if (!valid.empty()) valid += ", ";
    valid += n;
  }
  throw InvalidInput("margin.variant: unknown variant '" + std::string(name) +
                     "' (expected one of: " + valid + ")");
}

void MarginConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw InvalidInput("margin." + field + ": " + why);
  };
  if (!(s > 0) || !std::isfinite(s)) fail("s", "must be > 0");
  if (!(h > 0) || !std::isfinite(h)) fail("h", "must be > 0");
  if (!(epsilon > 0) || !std::isfinite(epsilon)) fail("epsilon", "must be > 0");
  if (!(lambda >= 0 && lambda <= 1)) fail("lambda", "must lie in [0, 1]");
  if (!(m >= 0) || !std::isfinite(m)) fail("m", "must be >= 0");
  if (!std::isfinite(m_arc)) fail("m_arc", "must be finite");
  if (!std::isfinite(m_cos)) fail("m_cos", "must be finite");
  if (variant == Variant::kSphere && !(m_sph >= 1))
    fail("m_sph", "must be >= 1");
}

}  // namespace funface
