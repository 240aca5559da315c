#pragma once

#include <cmath>
#include <vector>

#include "mbr/io/blobs.hpp"
#include "mbr/nn/param.hpp"

namespace mbr::train {

// Adam over a fixed parameter set, keyed by name for checkpointing. Params
// flagged non-trainable are never touched; frozen params are skipped while
// the flag is set but keep their state.
template <typename S>
class Adam {
 public:
  explicit Adam(nn::ParamRefs<S> params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].setZero(params_[i].param->size());
      v_[i].setZero(params_[i].param->size());
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      nn::Param<S>& p = *params_[i].param;
      if (!p.trainable || p.frozen) continue;
      auto& m = m_[i];
      auto& v = v_[i];
      for (Index j = 0; j < p.size(); ++j) {
        const double g = double(p.grad[j]);
        m[j] = S(beta1_ * double(m[j]) + (1.0 - beta1_) * g);
        v[j] = S(beta2_ * double(v[j]) + (1.0 - beta2_) * g * g);
        const double mhat = double(m[j]) / bc1;
        const double vhat = double(v[j]) / bc2;
        p.value[j] -= S(lr * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  long long steps() const { return t_; }

  // state round-trip for resumable checkpoints
  void export_state(io::NamedBlobs& nb) const {
    nb.meta["adam_t"] = t_;
    for (size_t i = 0; i < params_.size(); ++i) {
      std::vector<float> mv(size_t(m_[i].size())), vv(size_t(v_[i].size()));
      for (Index j = 0; j < m_[i].size(); ++j) {
        mv[size_t(j)] = float(m_[i][j]);
        vv[size_t(j)] = float(v_[i][j]);
      }
      nb.add("adam.m." + params_[i].name, std::move(mv));
      nb.add("adam.v." + params_[i].name, std::move(vv));
    }
  }
  void import_state(const io::NamedBlobs& nb) {
    t_ = nb.meta.value("adam_t", 0LL);
    for (size_t i = 0; i < params_.size(); ++i) {
      const auto* mv = nb.find("adam.m." + params_[i].name);
      const auto* vv = nb.find("adam.v." + params_[i].name);
      if (!mv || !vv) fail("checkpoint lacks optimizer state for '", params_[i].name, "'");
      MBR_CHECK(Index(mv->size()) == m_[i].size(), "optimizer state shape mismatch");
      for (Index j = 0; j < m_[i].size(); ++j) {
        m_[i][j] = S((*mv)[size_t(j)]);
        v_[i][j] = S((*vv)[size_t(j)]);
      }
    }
  }

 private:
  nn::ParamRefs<S> params_;
  double beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<VecX<S>> m_, v_;
};

}  // namespace mbr::train
