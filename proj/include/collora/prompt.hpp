#pragma once

#include "collora/nn/tensor.hpp"

namespace collora {

/// Conditioning vector: a trigger block followed by a descriptor block.
/// Trigger norm is 0 (teacher/general prompts) or 1; descriptor norm is 1.
struct PromptEmb {
  Vec trigger;
  Vec descriptor;

  Eigen::Index dim() const { return trigger.size() + descriptor.size(); }

  RowVec concat() const {
    RowVec out(dim());
    out << trigger.transpose(), descriptor.transpose();
    return out;
  }

  bool operator==(const PromptEmb& o) const {
    return trigger.size() == o.trigger.size() && descriptor.size() == o.descriptor.size() &&
           trigger == o.trigger && descriptor == o.descriptor;
  }
};

}  // namespace collora
