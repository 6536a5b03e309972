#include "collora/lora/bank.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <mutex>

#include <json.hpp>

#include "collora/error.hpp"
#include "collora/nn/model_io.hpp"

namespace collora {

namespace {

bool valid_name(const std::string& name) {
  return !name.empty() && std::all_of(name.begin(), name.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '.';
  });
}

}  // namespace

LoraBank::LoraBank(std::shared_ptr<const VectorFieldNet> base) : base_(std::move(base)) {
  if (!base_) throw ConfigError("bank requires a base network");
}

void LoraBank::add(LoraAdapter adapter) {
  if (!valid_name(adapter.name))
    throw ConfigError("adapter name '" + adapter.name + "' must be non-empty [A-Za-z0-9_.-]");
  adapter.check_compatible(*base_);
  std::unique_lock lock(mutex_);
  if (adapters_.contains(adapter.name))
    throw ConfigError("adapter '" + adapter.name + "' is already registered");
  adapter.trainable = false;
  adapters_.emplace(adapter.name, std::move(adapter));
}

LoraAdapter LoraBank::retrieve(const std::string& name) const {
  std::shared_lock lock(mutex_);
  const auto it = adapters_.find(name);
  if (it == adapters_.end()) throw RetrievalError("no adapter named '" + name + "' in bank");
  return it->second;
}

bool LoraBank::contains(const std::string& name) const {
  std::shared_lock lock(mutex_);
  return adapters_.contains(name);
}

std::vector<std::string> LoraBank::names() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [name, _] : adapters_) out.push_back(name);
  return out;
}

std::size_t LoraBank::size() const {
  std::shared_lock lock(mutex_);
  return adapters_.size();
}

void LoraBank::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::shared_lock lock(mutex_);
  nlohmann::ordered_json manifest;
  manifest["version"] = kFormatVersion;
  manifest["adapters"] = nlohmann::ordered_json::object();
  for (const auto& [name, adapter] : adapters_) {
    const std::string file = name + ".cfn";
    save_adapter(adapter, dir / file);
    manifest["adapters"][name] = file;
  }
  std::ofstream os(dir / "manifest.json");
  if (!os) throw FormatError("cannot write bank manifest in '" + dir.string() + "'");
  os << manifest.dump(2) << '\n';
}

std::unique_ptr<LoraBank> LoraBank::load(const std::filesystem::path& dir,
                                         std::shared_ptr<const VectorFieldNet> base) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw FormatError("missing bank manifest in '" + dir.string() + "'");
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad bank manifest: ") + e.what());
  }
  if (manifest.value("version", "") != kFormatVersion)
    throw FormatError("bank manifest version mismatch");
  auto bank = std::make_unique<LoraBank>(std::move(base));
  for (const auto& [name, file] : manifest.at("adapters").items()) {
    LoraAdapter ad = load_adapter(dir / file.get<std::string>());
    if (ad.name != name) throw FormatError("manifest name '" + name + "' does not match file");
    bank->add(std::move(ad));
  }
  return bank;
}

}  // namespace collora
