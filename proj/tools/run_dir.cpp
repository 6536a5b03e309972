#include "run_dir.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <Eigen/Core>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "collora/nn/model_io.hpp"

namespace collora::cli {

namespace fs = std::filesystem;

std::uint64_t resolve_seed(const std::vector<std::uint64_t>& flag, std::uint64_t fallback) {
  if (!flag.empty()) return flag.front();
  if (const char* env = std::getenv("COLLECTION_SEED")) {
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (errno != 0 || end == env || *end != '\0' || env[0] == '-')
      throw UsageFailure(std::string("COLLECTION_SEED is not a non-negative integer: '") + env + "'");
    return v;
  }
  return fallback;
}

OutputDir::OutputDir(fs::path dir, std::string label, bool force, const std::vector<std::string>& planned)
    : dir_(std::move(dir)), label_(std::move(label)) {
  if (fs::exists(dir_) && !fs::is_directory(dir_))
    throw UsageFailure("--out '" + dir_.string() + "' exists and is not a directory");
  fs::create_directories(dir_);
  if (!force) {
    std::vector<std::string> all = planned;
    all.push_back("manifest-" + label_ + ".json");
    for (const auto& rel : all)
      if (fs::exists(dir_ / rel))
        throw UsageFailure("refusing to overwrite '" + (dir_ / rel).string() + "' (pass --force)");
  }
  lock_ = dir_ / ".collora.lock";
  const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    lock_.clear();
    if (errno == EEXIST)
      throw std::runtime_error("output directory '" + dir_.string() + "' is locked by another run (" +
                               (dir_ / ".collora.lock").string() + ")");
    throw std::runtime_error("cannot create lock file in '" + dir_.string() + "': " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputDir::~OutputDir() {
  if (!lock_.empty()) {
    std::error_code ec;
    fs::remove(lock_, ec);
  }
}

fs::path OutputDir::artifact(const std::string& rel) {
  const fs::path p = dir_ / rel;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  artifacts_.push_back(rel);
  return p;
}

void OutputDir::finish(nlohmann::ordered_json manifest) {
  if (finished_) throw std::logic_error("manifest already written");
  manifest["artifacts"] = artifacts_;
  manifest["versions"] = versions();
  const fs::path final_path = dir_ / ("manifest-" + label_ + ".json");
  const fs::path tmp = dir_ / (".manifest-" + label_ + ".json.tmp");
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    os << manifest.dump(2) << '\n';
    if (!os) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, final_path);
  finished_ = true;
}

nlohmann::ordered_json versions() {
  nlohmann::ordered_json v;
  v["collora"] = "0.1.0";
  v["model_format"] = kFormatVersion;
  v["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
               std::to_string(EIGEN_MINOR_VERSION);
  return v;
}

}  // namespace collora::cli
