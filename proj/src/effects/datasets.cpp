#include "collora/effects/datasets.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "collora/error.hpp"
#include "collora/nn/model_io.hpp"

namespace collora {

namespace sources {

namespace {
const std::array<Vec2, 4> kCentres{Vec2(1, 0), Vec2(0, 1), Vec2(-1, 0), Vec2(0, -1)};
}

Mat mixture(Eigen::Index n, Rng& rng) {
  Mat out(n, 2);
  for (Eigen::Index r = 0; r < n; ++r) {
    const Vec2& c = kCentres[rng.index(kCentres.size())];
    const Vec2 p = c + kComponentSigma * rng.normal2();
    out(r, 0) = p.x();
    out(r, 1) = p.y();
  }
  return out;
}

Mat general(Eigen::Index n, Rng& rng) { return kGeneralSigma * rng.normal_mat(n, 2); }

double mixture_sigma_distance(const Vec2& x) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : kCentres) best = std::min(best, (x - c).norm());
  return best / kComponentSigma;
}

Mat ood(Eigen::Index n, Rng& rng) {
  Mat out(n, 2);
  Eigen::Index r = 0;
  while (r < n) {
    const double radius = rng.uniform(kOodInner, kOodOuter);
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Vec2 p(radius * std::cos(angle), radius * std::sin(angle));
    if (mixture_sigma_distance(p) <= 3.0) continue;
    out(r, 0) = p.x();
    out(r, 1) = p.y();
    ++r;
  }
  return out;
}

}  // namespace sources

PairDataset build_effect_dataset(const EffectSpec& spec, Eigen::Index n, Rng& rng) {
  if (n < 0) throw ConfigError("dataset size must be non-negative");
  PairDataset d;
  d.tag = spec.name();
  d.effect_id = spec.id;
  d.x_src = sources::mixture(n, rng);
  d.y = apply_effect(spec, d.x_src);
  if (spec.sigma_eff > 0.0) d.y += spec.sigma_eff * rng.normal_mat(n, 2);
  return d;
}

PairDataset build_general_dataset(Eigen::Index n, Rng& rng) {
  if (n < 0) throw ConfigError("dataset size must be non-negative");
  PairDataset d;
  d.tag = "general";
  d.x_src = sources::general(n, rng);
  d.y = Mat(0, 2);
  return d;
}

Mat reconstruction_targets(const Mat& x_src, double sigma, Rng& rng) {
  return x_src + sigma * rng.normal_mat(x_src.rows(), 2);
}

Batch sample_batch(const PairDataset& data, Eigen::Index n, Rng& rng) {
  if (data.size() == 0) throw ConfigError("cannot sample from empty dataset '" + data.tag + "'");
  Batch b{Mat(n, 2), data.has_targets() ? Mat(n, 2) : Mat(0, 2)};
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(data.size())));
    b.x_src.row(r) = data.x_src.row(i);
    if (data.has_targets()) b.y.row(r) = data.y.row(i);
  }
  return b;
}

void write_dataset(const PairDataset& data, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write dataset '" + path.string() + "'");
  for (Eigen::Index r = 0; r < data.size(); ++r) {
    // Hex-float strings keep the dump bit-exact and byte-reproducible.
    nlohmann::ordered_json j;
    j["tag"] = data.tag;
    j["effect"] = data.effect_id ? nlohmann::json(*data.effect_id) : nlohmann::json(nullptr);
    j["x_src"] = {io::format_real(data.x_src(r, 0)), io::format_real(data.x_src(r, 1))};
    if (data.has_targets()) j["y"] = {io::format_real(data.y(r, 0)), io::format_real(data.y(r, 1))};
    os << j.dump() << '\n';
  }
}

PairDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open dataset '" + path.string() + "'");
  PairDataset d;
  std::vector<Vec2> xs, ys;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto tag = j.at("tag").get<std::string>();
      if (first) {
        d.tag = tag;
        if (!j.at("effect").is_null()) d.effect_id = j.at("effect").get<int>();
        first = false;
      } else if (tag != d.tag) {
        throw FormatError("mixed tags");
      }
      const auto& x = j.at("x_src");
      xs.emplace_back(io::parse_real(x.at(0).get<std::string>()),
                      io::parse_real(x.at(1).get<std::string>()));
      if (j.contains("y")) {
        const auto& y = j.at("y");
        ys.emplace_back(io::parse_real(y.at(0).get<std::string>()),
                        io::parse_real(y.at(1).get<std::string>()));
      }
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!ys.empty() && ys.size() != xs.size())
    throw FormatError(path.string() + ": some rows lack targets");
  d.x_src.resize(static_cast<Eigen::Index>(xs.size()), 2);
  for (std::size_t i = 0; i < xs.size(); ++i) d.x_src.row(static_cast<Eigen::Index>(i)) = xs[i].transpose();
  d.y.resize(static_cast<Eigen::Index>(ys.size()), 2);
  for (std::size_t i = 0; i < ys.size(); ++i) d.y.row(static_cast<Eigen::Index>(i)) = ys[i].transpose();
  return d;
}

}  // namespace collora
