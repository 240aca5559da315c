#pragma once

#include <cmath>

#include "mbr/core/rng.hpp"
#include "mbr/core/tensor.hpp"
#include "mbr/nn/param.hpp"

namespace mbr::nn {

// Bias-free dense map, weight layout (out, in) row-major.
template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(Index in, Index out) : in_(in), out_(out) { weight_.init(in * out); }

  void init_normal(Rng& rng, double stddev = 0.001) {
    for (Index i = 0; i < weight_.value.size(); ++i)
      weight_.value[i] = S(rng.normal(0.0, stddev));
  }

  Index in_features() const { return in_; }
  Index out_features() const { return out_; }
  Index param_count() const { return in_ * out_; }

  void collect(const std::string& prefix, ParamRefs<S>& out) {
    out.push_back({prefix + ".w", &weight_});
  }

  RowMatX<S> forward(const RowMatX<S>& x) const {
    MBR_CHECK(x.cols() == in_, "linear input mismatch");
    MapConstRowMat<S> w(weight_.value.data(), out_, in_);
    return x * w.transpose();
  }

  RowMatX<S> backward(const RowMatX<S>& x, const RowMatX<S>& dy) {
    MapConstRowMat<S> w(weight_.value.data(), out_, in_);
    MapRowMat<S> dw(weight_.grad.data(), out_, in_);
    dw.noalias() += dy.transpose() * x;
    return dy * w;
  }

  Param<S>& weight() { return weight_; }
  const Param<S>& weight() const { return weight_; }

 private:
  Index in_ = 0, out_ = 0;
  Param<S> weight_;
};

}  // namespace mbr::nn
