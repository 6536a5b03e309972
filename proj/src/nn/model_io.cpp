#include "collora/nn/model_io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>

#include "collora/error.hpp"

namespace collora {
namespace io {

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_real(const std::string& token) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0' || errno == ERANGE)
    throw FormatError("malformed real '" + token + "'");
  return v;
}

void write_header(std::ostream& os, const std::string& kind) {
  os << kFormatVersion << "\nkind " << kind << "\n";
}

void write_field(std::ostream& os, const std::string& key, const std::string& value) {
  os << key << ' ' << value << '\n';
}

void write_real(std::ostream& os, const std::string& key, double value) {
  write_field(os, key, format_real(value));
}

void write_matrix(std::ostream& os, const std::string& name, const Mat& m) {
  os << "matrix " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) os << ' ';
      os << format_real(m(r, c));
    }
    os << '\n';
  }
}

void write_end(std::ostream& os) { os << "end\n"; }

std::string Reader::next(const char* what) {
  std::string tok;
  if (!(is_ >> tok)) throw FormatError(std::string("truncated file: expected ") + what);
  return tok;
}

void Reader::expect_header(const std::string& kind) {
  const std::string version = next("format version");
  if (version != kFormatVersion)
    throw FormatError("unsupported format version '" + version + "' (expected " +
                      kFormatVersion + ")");
  if (next("'kind'") != "kind") throw FormatError("missing 'kind' record");
  const std::string k = next("record kind");
  if (k != kind) throw FormatError("expected a '" + kind + "' record, found '" + k + "'");
}

std::string Reader::field(const std::string& key) {
  const std::string k = next(key.c_str());
  if (k != key) throw FormatError("expected field '" + key + "', found '" + k + "'");
  return next(key.c_str());
}

double Reader::real_field(const std::string& key) { return parse_real(field(key)); }

long Reader::int_field(const std::string& key) {
  const std::string v = field(key);
  char* end = nullptr;
  const long n = std::strtol(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') throw FormatError("malformed integer for '" + key + "'");
  return n;
}

Mat Reader::matrix(const std::string& name) {
  if (next("'matrix'") != "matrix") throw FormatError("expected matrix record '" + name + "'");
  const std::string n = next("matrix name");
  if (n != name) throw FormatError("expected matrix '" + name + "', found '" + n + "'");
  const long rows = std::strtol(next("row count").c_str(), nullptr, 10);
  const long cols = std::strtol(next("column count").c_str(), nullptr, 10);
  if (rows < 0 || cols < 0 || rows > (1 << 20) || cols > (1 << 20))
    throw FormatError("implausible shape for matrix '" + name + "'");
  Mat m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) m(r, c) = parse_real(next("matrix value"));
  return m;
}

void Reader::expect_end() {
  if (next("'end'") != "end") throw FormatError("missing end marker");
}

}  // namespace io

void save_model(const VectorFieldNet& net, std::ostream& os) {
  io::write_header(os, "net");
  io::write_field(os, "activation", to_string(net.activation()));
  io::write_field(os, "prompt_dim", std::to_string(net.prompt_dim()));
  io::write_field(os, "layers", std::to_string(net.layers().size()));
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    io::write_matrix(os, "weight." + std::to_string(i), l.weight);
    io::write_matrix(os, "bias." + std::to_string(i), l.bias);
  }
  io::write_end(os);
}

void save_model(const VectorFieldNet& net, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  save_model(net, os);
  if (!os) throw FormatError("write failed for '" + path.string() + "'");
}

VectorFieldNet load_model(std::istream& is) {
  io::Reader in(is);
  in.expect_header("net");
  const Activation act = activation_from_string(in.field("activation"));
  const long prompt_dim = in.int_field("prompt_dim");
  const long n = in.int_field("layers");
  if (n <= 0 || n > 64) throw FormatError("implausible layer count");
  std::vector<DenseLayer> layers;
  for (long i = 0; i < n; ++i) {
    DenseLayer l;
    l.weight = in.matrix("weight." + std::to_string(i));
    const Mat b = in.matrix("bias." + std::to_string(i));
    if (b.rows() != 1 || b.cols() != l.weight.rows()) throw FormatError("bias shape mismatch");
    l.bias = b.row(0);
    layers.push_back(std::move(l));
  }
  in.expect_end();
  try {
    return VectorFieldNet(std::move(layers), act, static_cast<int>(prompt_dim));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("inconsistent model: ") + e.what());
  }
}

VectorFieldNet load_model(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open '" + path.string() + "'");
  return load_model(is);
}

}  // namespace collora
