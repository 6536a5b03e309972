#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "collora/nn/tensor.hpp"

namespace collora {

// The toy "visual effects": deterministic maps R^2 -> R^2.
struct Rotation {
  double degrees = 0.0;
};
struct Scaling {
  double factor = 1.0;
};
struct Translation {
  double dx = 0.0;
  double dy = 0.0;
};
/// Mirror across the line through the origin at `axis_degrees`.
struct Reflection {
  double axis_degrees = 0.0;
};
/// Rotation by `strength * |x|` radians (angle grows with radius).
struct Swirl {
  double strength = 0.0;
};

using Transform = std::variant<Rotation, Scaling, Translation, Reflection, Swirl>;

Vec2 apply_transform(const Transform& t, const Vec2& x);
std::string kind_name(const Transform& t);

struct EffectSpec {
  int id = 0;
  Transform transform;
  double sigma_eff = 0.02;  // observation noise on training targets
  std::uint64_t descriptor_seed = 0;

  int trigger_index() const { return id; }
  std::string name() const { return "effect_" + std::to_string(id); }
};

Vec2 apply_effect(const EffectSpec& spec, const Vec2& x_src);
Mat apply_effect(const EffectSpec& spec, const Mat& x_src);

/// T_b(T_a(x)): the sequential-composition ground truth.
Mat apply_composition(const EffectSpec& first, const EffectSpec& second, const Mat& x_src);

/// Rotation 45°/90°, scaling 0.5/1.5, two translations, reflection, swirl.
std::vector<EffectSpec> default_effects();
/// A ninth effect (rotation 180°, id 8) for incremental extension.
EffectSpec extension_effect();

// Registry: JSON array of {id, kind, params, seed[, sigma]}.
nlohmann::json effect_to_json(const EffectSpec& spec);
EffectSpec effect_from_json(const nlohmann::json& j);
std::vector<EffectSpec> load_registry(const std::filesystem::path& path);
void save_registry(const std::vector<EffectSpec>& effects, const std::filesystem::path& path);

}  // namespace collora
