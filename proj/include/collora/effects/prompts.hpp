#pragma once

#include <span>
#include <vector>

#include "collora/effects/effects.hpp"
#include "collora/prompt.hpp"

namespace collora {

struct PromptDims {
  int trigger = 16;
  int descriptor = 16;

  int total() const { return trigger + descriptor; }
};

/// Deterministic prompt embeddings for a registry of effects.
///
/// Teacher prompts: zero trigger plus a descriptor keyed by (seed, "teacher").
/// Student prompts: one-hot trigger e_id plus a distinct descriptor keyed by
/// (seed, "vlm"). Every new descriptor is resampled until |cos| < 0.6 against
/// all descriptors generated before it, so adding effects never changes the
/// prompts of existing ones.
class PromptBook {
 public:
  static constexpr double kMaxDescriptorCosine = 0.6;

  explicit PromptBook(std::span<const EffectSpec> effects, PromptDims dims = {});

  /// Registers one more effect (incremental extension). Ids must be contiguous.
  void add(const EffectSpec& spec);

  const PromptDims& dims() const { return dims_; }
  int size() const { return static_cast<int>(teacher_.size()); }

  PromptEmb teacher(int id) const;
  PromptEmb student(int id) const;
  PromptEmb general() const;
  /// Trigger (e_a + e_b) normalized, descriptor the normalized sum of both
  /// student descriptors. compose(i, i) equals student(i) up to rounding.
  PromptEmb compose(int a, int b) const;

  /// The generator-side prompt: student(id), or teacher(id) when the
  /// asymmetric prompting is disabled.
  PromptEmb generator(int id, bool asymmetric) const {
    return asymmetric ? student(id) : teacher(id);
  }

 private:
  Vec fresh_descriptor(std::uint64_t seed, const char* role);
  void check_id(int id) const;

  PromptDims dims_;
  std::vector<Vec> accepted_;  // every descriptor issued so far
  Vec general_;
  std::vector<Vec> teacher_;
  std::vector<Vec> vlm_;
};

}  // namespace collora
