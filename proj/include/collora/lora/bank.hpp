#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <vector>

#include "collora/lora/lora.hpp"

namespace collora {

/// Named store of effect adapters over one shared base network.
///
/// Reads are safe from many threads; registration takes an exclusive lock.
/// On disk a bank is a directory holding `manifest.json` (name -> file) and
/// one cfn-v1 adapter file per entry.
class LoraBank {
 public:
  explicit LoraBank(std::shared_ptr<const VectorFieldNet> base);

  LoraBank(const LoraBank&) = delete;
  LoraBank& operator=(const LoraBank&) = delete;

  /// Throws ConfigError on a duplicate or malformed name, or a shape mismatch.
  void add(LoraAdapter adapter);

  /// Copy of the named adapter; throws RetrievalError when the name is unknown.
  LoraAdapter retrieve(const std::string& name) const;

  bool contains(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t size() const;
  const VectorFieldNet& base() const { return *base_; }
  std::shared_ptr<const VectorFieldNet> base_ptr() const { return base_; }

  void save(const std::filesystem::path& dir) const;
  static std::unique_ptr<LoraBank> load(const std::filesystem::path& dir,
                                        std::shared_ptr<const VectorFieldNet> base);

 private:
  std::shared_ptr<const VectorFieldNet> base_;
  std::map<std::string, LoraAdapter> adapters_;
  mutable std::shared_mutex mutex_;
};

}  // namespace collora
