#pragma once

#include <string>
#include <vector>

#include "mbr/core/tensor.hpp"

namespace mbr::nn {

// A learnable tensor, stored flat; layout is the owning layer's business.
template <typename S>
struct Param {
  VecX<S> value;
  VecX<S> grad;
  bool trainable = true;  // false: never updated (frozen by design, e.g. neck bias)
  bool frozen = false;    // runtime freeze toggle (training phases)

  void init(Index n) {
    value.setZero(n);
    grad.setZero(n);
  }
  Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(); }
};

template <typename S>
struct ParamRef {
  std::string name;
  Param<S>* param;
};

template <typename S>
struct BufferRef {
  std::string name;
  VecX<S>* buffer;
};

template <typename S>
using ParamRefs = std::vector<ParamRef<S>>;
template <typename S>
using BufferRefs = std::vector<BufferRef<S>>;

}  // namespace mbr::nn
