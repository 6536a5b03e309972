#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace collora::cli {

/// Bad invocation: exit code 2.
class UsageFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// --seed, else COLLECTION_SEED, else the fallback.
std::uint64_t resolve_seed(const std::vector<std::uint64_t>& flag, std::uint64_t fallback);

/// An output directory owned by one command for its lifetime.
///
/// Construction creates the directory, refuses (UsageFailure) when any planned
/// artifact already exists unless `force`, and takes an exclusive lock file.
/// Artifacts are recorded as they are written; `finish` writes the manifest
/// (temp file + rename) and must be the last write of the command.
class OutputDir {
 public:
  OutputDir(std::filesystem::path dir, std::string label, bool force,
            const std::vector<std::string>& planned);
  ~OutputDir();

  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  const std::filesystem::path& dir() const { return dir_; }
  /// Full path for a relative artifact name, recorded in the manifest.
  std::filesystem::path artifact(const std::string& rel);
  void finish(nlohmann::ordered_json manifest);

 private:
  std::filesystem::path dir_;
  std::string label_;
  std::filesystem::path lock_;
  std::vector<std::string> artifacts_;
  bool finished_ = false;
};

nlohmann::ordered_json versions();

}  // namespace collora::cli
