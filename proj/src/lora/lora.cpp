#include "collora/lora/lora.hpp"

#include <cmath>
#include <fstream>

#include "collora/error.hpp"
#include "collora/nn/model_io.hpp"

namespace collora {

LoraAdapter LoraAdapter::create(const VectorFieldNet& base, int rank, double alpha,
                                std::string name, Rng& rng) {
  LoraAdapter ad = zeros(base, rank, alpha, std::move(name));
  const double scale = 1.0 / std::sqrt(static_cast<double>(rank));
  for (auto& f : ad.factors) f.a = rng.normal_mat(f.a.rows(), f.a.cols()) * scale;
  return ad;
}

LoraAdapter LoraAdapter::zeros(const VectorFieldNet& base, int rank, double alpha,
                               std::string name) {
  if (rank <= 0) throw ConfigError("adapter rank must be positive");
  LoraAdapter ad;
  ad.name = std::move(name);
  ad.rank = rank;
  ad.alpha = alpha;
  for (const auto& l : base.layers())
    ad.factors.push_back({Mat::Zero(rank, l.in_dim()), Mat::Zero(l.out_dim(), rank)});
  return ad;
}

double LoraAdapter::delta_frobenius_norm() const {
  double s = 0.0;
  for (std::size_t i = 0; i < factors.size(); ++i) s += delta(i).squaredNorm();
  return std::sqrt(s);
}

bool LoraAdapter::compatible_with(const VectorFieldNet& base) const {
  if (factors.size() != base.layers().size()) return false;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const auto& l = base.layers()[i];
    const auto& f = factors[i];
    if (f.a.cols() != l.in_dim() || f.b.rows() != l.out_dim() || f.a.rows() != f.b.cols())
      return false;
  }
  return true;
}

void LoraAdapter::check_compatible(const VectorFieldNet& base) const {
  if (!compatible_with(base))
    throw ConfigError("adapter '" + name + "' is not shape-compatible with the base network");
}

bool LoraAdapter::finite() const {
  for (const auto& f : factors)
    if (!f.a.allFinite() || !f.b.allFinite()) return false;
  return true;
}

std::vector<std::span<double>> LoraAdapter::parameter_blocks() {
  std::vector<std::span<double>> out;
  for (auto& f : factors) {
    out.emplace_back(f.a.data(), static_cast<std::size_t>(f.a.size()));
    out.emplace_back(f.b.data(), static_cast<std::size_t>(f.b.size()));
  }
  return out;
}

bool LoraAdapter::operator==(const LoraAdapter& o) const {
  if (name != o.name || rank != o.rank || alpha != o.alpha || trainable != o.trainable ||
      factors.size() != o.factors.size())
    return false;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const auto &x = factors[i], &y = o.factors[i];
    if (x.a.rows() != y.a.rows() || x.a.cols() != y.a.cols() || x.b.rows() != y.b.rows() ||
        x.b.cols() != y.b.cols() || x.a != y.a || x.b != y.b)
      return false;
  }
  return true;
}

std::vector<std::span<const double>> AdapterGrads::blocks() const {
  std::vector<std::span<const double>> out;
  for (const auto& f : factors) {
    out.emplace_back(f.a.data(), static_cast<std::size_t>(f.a.size()));
    out.emplace_back(f.b.data(), static_cast<std::size_t>(f.b.size()));
  }
  return out;
}

bool AdapterGrads::finite() const {
  for (const auto& f : factors)
    if (!f.a.allFinite() || !f.b.allFinite()) return false;
  return true;
}

AdapterGrads adapter_grads(const LoraAdapter& adapter, const Gradients& merged) {
  if (merged.layers.size() != adapter.factors.size())
    throw UsageError("gradient layout does not match adapter");
  AdapterGrads g;
  g.factors.reserve(adapter.factors.size());
  for (std::size_t i = 0; i < adapter.factors.size(); ++i) {
    const auto& f = adapter.factors[i];
    const Mat& dw = merged.layers[i].weight;
    g.factors.push_back({adapter.alpha * (f.b.transpose() * dw), adapter.alpha * (dw * f.a.transpose())});
  }
  return g;
}

AdaptedNet::AdaptedNet(const VectorFieldNet& base, const LoraAdapter& adapter)
    : base_(&base), adapter_(&adapter) {
  adapter.check_compatible(base);
  refresh();
}

void AdaptedNet::refresh() { merged_ = merge(*base_, *adapter_); }

AdaptedNet attach(const VectorFieldNet& base, const LoraAdapter& adapter) {
  return AdaptedNet(base, adapter);
}

VectorFieldNet merge(const VectorFieldNet& base, const LoraAdapter& adapter) {
  adapter.check_compatible(base);
  std::vector<DenseLayer> layers = base.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].weight += adapter.delta(i);
  return VectorFieldNet(std::move(layers), base.activation(), base.prompt_dim());
}

LoraAdapter concat(const LoraAdapter& first, const LoraAdapter& second, std::string name) {
  if (first.factors.size() != second.factors.size())
    throw ConfigError("cannot combine adapters over different layer stacks");
  LoraAdapter out;
  out.name = std::move(name);
  out.rank = first.rank + second.rank;
  out.alpha = 1.0;
  out.trainable = false;
  for (std::size_t i = 0; i < first.factors.size(); ++i) {
    const auto &x = first.factors[i], &y = second.factors[i];
    if (x.a.cols() != y.a.cols() || x.b.rows() != y.b.rows())
      throw ConfigError("cannot combine adapters with different layer shapes");
    LoraFactor f;
    f.a.resize(out.rank, x.a.cols());
    f.a << x.a, y.a;
    f.b.resize(x.b.rows(), out.rank);
    f.b << first.alpha * x.b, second.alpha * y.b;
    out.factors.push_back(std::move(f));
  }
  return out;
}

void adapter_step(LoraAdapter& adapter, const AdapterGrads& grads, Adam& opt) {
  if (!adapter.trainable) throw UsageError("adapter '" + adapter.name + "' is frozen");
  const auto params = adapter.parameter_blocks();
  const auto g = grads.blocks();
  opt.step(params, g);
}

void save_adapter(const LoraAdapter& adapter, std::ostream& os) {
  io::write_header(os, "adapter");
  io::write_field(os, "name", adapter.name.empty() ? "-" : adapter.name);
  io::write_field(os, "rank", std::to_string(adapter.rank));
  io::write_real(os, "alpha", adapter.alpha);
  io::write_field(os, "trainable", adapter.trainable ? "1" : "0");
  io::write_field(os, "layers", std::to_string(adapter.factors.size()));
  for (std::size_t i = 0; i < adapter.factors.size(); ++i) {
    io::write_matrix(os, "A." + std::to_string(i), adapter.factors[i].a);
    io::write_matrix(os, "B." + std::to_string(i), adapter.factors[i].b);
  }
  io::write_end(os);
}

void save_adapter(const LoraAdapter& adapter, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  save_adapter(adapter, os);
  if (!os) throw FormatError("write failed for '" + path.string() + "'");
}

LoraAdapter load_adapter(std::istream& is) {
  io::Reader in(is);
  in.expect_header("adapter");
  LoraAdapter ad;
  ad.name = in.field("name");
  if (ad.name == "-") ad.name.clear();
  ad.rank = static_cast<int>(in.int_field("rank"));
  ad.alpha = in.real_field("alpha");
  ad.trainable = in.int_field("trainable") != 0;
  const long n = in.int_field("layers");
  if (ad.rank <= 0 || n <= 0 || n > 64) throw FormatError("implausible adapter header");
  for (long i = 0; i < n; ++i) {
    LoraFactor f;
    f.a = in.matrix("A." + std::to_string(i));
    f.b = in.matrix("B." + std::to_string(i));
    if (f.a.rows() != ad.rank || f.b.cols() != ad.rank)
      throw FormatError("adapter factor rank mismatch in layer " + std::to_string(i));
    ad.factors.push_back(std::move(f));
  }
  in.expect_end();
  return ad;
}

LoraAdapter load_adapter(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  return load_adapter(is);
}

}  // namespace collora
