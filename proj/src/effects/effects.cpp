#include "collora/effects/effects.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "collora/error.hpp"

namespace collora {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Vec2 rotate(const Vec2& x, double radians) {
  const double c = std::cos(radians), s = std::sin(radians);
  return {c * x.x() - s * x.y(), s * x.x() + c * x.y()};
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

Vec2 apply_transform(const Transform& t, const Vec2& x) {
  return std::visit(
      overloaded{
          [&](const Rotation& r) { return rotate(x, r.degrees * kDeg); },
          [&](const Scaling& s) { return Vec2(s.factor * x); },
          [&](const Translation& tr) { return Vec2(x + Vec2(tr.dx, tr.dy)); },
          [&](const Reflection& rf) {
            const double c = std::cos(2.0 * rf.axis_degrees * kDeg);
            const double s = std::sin(2.0 * rf.axis_degrees * kDeg);
            return Vec2(c * x.x() + s * x.y(), s * x.x() - c * x.y());
          },
          [&](const Swirl& sw) { return rotate(x, sw.strength * x.norm()); },
      },
      t);
}

std::string kind_name(const Transform& t) {
  return std::visit(overloaded{
                        [](const Rotation&) { return std::string("rotation"); },
                        [](const Scaling&) { return std::string("scaling"); },
                        [](const Translation&) { return std::string("translation"); },
                        [](const Reflection&) { return std::string("reflection"); },
                        [](const Swirl&) { return std::string("swirl"); },
                    },
                    t);
}

Vec2 apply_effect(const EffectSpec& spec, const Vec2& x_src) {
  return apply_transform(spec.transform, x_src);
}

Mat apply_effect(const EffectSpec& spec, const Mat& x_src) {
  Mat out(x_src.rows(), 2);
  for (Eigen::Index r = 0; r < x_src.rows(); ++r) {
    const Vec2 y = apply_transform(spec.transform, row2(x_src, r));
    out(r, 0) = y.x();
    out(r, 1) = y.y();
  }
  return out;
}

Mat apply_composition(const EffectSpec& first, const EffectSpec& second, const Mat& x_src) {
  return apply_effect(second, apply_effect(first, x_src));
}

std::vector<EffectSpec> default_effects() {
  const std::vector<Transform> transforms{
      Rotation{45.0},          Rotation{90.0},           Scaling{0.5},     Scaling{1.5},
      Translation{0.4, 0.4},   Translation{-0.4, 0.4},   Reflection{-30.0}, Swirl{-0.4},
  };
  std::vector<EffectSpec> out;
  for (std::size_t i = 0; i < transforms.size(); ++i) {
    EffectSpec s;
    s.id = static_cast<int>(i);
    s.transform = transforms[i];
    s.descriptor_seed = 1000 + i;
    out.push_back(s);
  }
  return out;
}

EffectSpec extension_effect() {
  EffectSpec s;
  s.id = 8;
  s.transform = Rotation{180.0};
  s.descriptor_seed = 1008;
  return s;
}

nlohmann::json effect_to_json(const EffectSpec& spec) {
  nlohmann::json params = std::visit(
      overloaded{
          [](const Rotation& r) { return nlohmann::json{{"degrees", r.degrees}}; },
          [](const Scaling& s) { return nlohmann::json{{"factor", s.factor}}; },
          [](const Translation& t) { return nlohmann::json{{"dx", t.dx}, {"dy", t.dy}}; },
          [](const Reflection& r) { return nlohmann::json{{"axis_degrees", r.axis_degrees}}; },
          [](const Swirl& s) { return nlohmann::json{{"strength", s.strength}}; },
      },
      spec.transform);
  return {{"id", spec.id},
          {"kind", kind_name(spec.transform)},
          {"params", params},
          {"seed", spec.descriptor_seed},
          {"sigma", spec.sigma_eff}};
}

EffectSpec effect_from_json(const nlohmann::json& j) {
  try {
    for (const auto& [key, _] : j.items())
      if (key != "id" && key != "kind" && key != "params" && key != "seed" && key != "sigma")
        throw ConfigError("unknown effect key '" + key + "'");
    EffectSpec s;
    s.id = j.at("id").get<int>();
    s.descriptor_seed = j.at("seed").get<std::uint64_t>();
    s.sigma_eff = j.value("sigma", 0.02);
    const auto& p = j.at("params");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "rotation")
      s.transform = Rotation{p.at("degrees").get<double>()};
    else if (kind == "scaling")
      s.transform = Scaling{p.at("factor").get<double>()};
    else if (kind == "translation")
      s.transform = Translation{p.at("dx").get<double>(), p.at("dy").get<double>()};
    else if (kind == "reflection")
      s.transform = Reflection{p.at("axis_degrees").get<double>()};
    else if (kind == "swirl")
      s.transform = Swirl{p.at("strength").get<double>()};
    else
      throw ConfigError("unknown effect kind '" + kind + "'");
    if (s.id < 0) throw ConfigError("effect id must be non-negative");
    if (!(s.sigma_eff >= 0.0)) throw ConfigError("effect noise must be non-negative");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed effect entry: ") + e.what());
  }
}

std::vector<EffectSpec> load_registry(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open effect registry '" + path.string() + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("effect registry is not valid JSON: ") + e.what());
  }
  if (!j.is_array()) throw ConfigError("effect registry must be a JSON array");
  std::vector<EffectSpec> out;
  for (const auto& e : j) out.push_back(effect_from_json(e));
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i].id != static_cast<int>(i))
      throw ConfigError("effect ids must be 0..N-1 in order");
  return out;
}

void save_registry(const std::vector<EffectSpec>& effects, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : effects) j.push_back(effect_to_json(e));
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write effect registry '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

}  // namespace collora
