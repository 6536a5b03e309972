#include "collora/effects/prompts.hpp"

#include <cmath>

#include "collora/error.hpp"
#include "collora/nn/rng.hpp"

namespace collora {

namespace {
constexpr std::uint64_t kGeneralSeed = 0x67656e6572616cULL;
constexpr int kMaxAttempts = 10000;
}  // namespace

PromptBook::PromptBook(std::span<const EffectSpec> effects, PromptDims dims) : dims_(dims) {
  if (dims_.trigger <= 0 || dims_.descriptor <= 0) throw ConfigError("prompt blocks must be non-empty");
  general_ = fresh_descriptor(kGeneralSeed, "general");
  for (const auto& e : effects) add(e);
}

Vec PromptBook::fresh_descriptor(std::uint64_t seed, const char* role) {
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Rng rng(mix_seed(seed, role, static_cast<std::uint64_t>(attempt)));
    Vec d(dims_.descriptor);
    for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = rng.normal();
    d.normalize();
    bool ok = true;
    for (const auto& other : accepted_)
      if (std::abs(d.dot(other)) >= kMaxDescriptorCosine) {
        ok = false;
        break;
      }
    if (ok) {
      accepted_.push_back(d);
      return d;
    }
  }
  throw ConfigError("could not place a descriptor with |cos| < 0.6; increase the descriptor width");
}

void PromptBook::add(const EffectSpec& spec) {
  if (spec.id != size())
    throw ConfigError("effect ids must be registered in order (expected " +
                      std::to_string(size()) + ", got " + std::to_string(spec.id) + ")");
  if (spec.trigger_index() >= dims_.trigger)
    throw ConfigError("effect count exceeds trigger width " + std::to_string(dims_.trigger));
  teacher_.push_back(fresh_descriptor(spec.descriptor_seed, "teacher"));
  vlm_.push_back(fresh_descriptor(spec.descriptor_seed, "vlm"));
}

void PromptBook::check_id(int id) const {
  if (id < 0 || id >= size()) throw ConfigError("unknown effect id " + std::to_string(id));
}

PromptEmb PromptBook::teacher(int id) const {
  check_id(id);
  return {Vec::Zero(dims_.trigger), teacher_[static_cast<std::size_t>(id)]};
}

PromptEmb PromptBook::student(int id) const {
  check_id(id);
  Vec trig = Vec::Zero(dims_.trigger);
  trig(id) = 1.0;
  return {trig, vlm_[static_cast<std::size_t>(id)]};
}

PromptEmb PromptBook::general() const { return {Vec::Zero(dims_.trigger), general_}; }

PromptEmb PromptBook::compose(int a, int b) const {
  check_id(a);
  check_id(b);
  Vec trig = Vec::Zero(dims_.trigger);
  trig(a) += 1.0;
  trig(b) += 1.0;
  trig.normalize();
  Vec desc = vlm_[static_cast<std::size_t>(a)] + vlm_[static_cast<std::size_t>(b)];
  desc.normalize();
  return {trig, desc};
}

}  // namespace collora
