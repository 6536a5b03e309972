#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "collora/nn/vector_field.hpp"

namespace collora {

/// Portable text format shared by models and adapters.
///
///     cfn-v1
///     kind net | adapter
///     <header fields: "key value" lines>
///     matrix <name> <rows> <cols>
///     <rows lines of space-separated hexadecimal floats (printf %a)>
///     ...
///     end
///
/// Hexadecimal floats make a save/load round trip bit-exact.
inline constexpr const char* kFormatVersion = "cfn-v1";

namespace io {

void write_header(std::ostream& os, const std::string& kind);
void write_field(std::ostream& os, const std::string& key, const std::string& value);
void write_real(std::ostream& os, const std::string& key, double value);
void write_matrix(std::ostream& os, const std::string& name, const Mat& m);
void write_end(std::ostream& os);

std::string format_real(double v);
double parse_real(const std::string& token);

/// Token reader with positional error messages. Every failure is a FormatError.
class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  void expect_header(const std::string& kind);
  std::string field(const std::string& key);
  double real_field(const std::string& key);
  long int_field(const std::string& key);
  Mat matrix(const std::string& name);
  void expect_end();

 private:
  std::string next(const char* what);
  std::istream& is_;
};

}  // namespace io

void save_model(const VectorFieldNet& net, std::ostream& os);
void save_model(const VectorFieldNet& net, const std::filesystem::path& path);
VectorFieldNet load_model(std::istream& is);
VectorFieldNet load_model(const std::filesystem::path& path);

}  // namespace collora
