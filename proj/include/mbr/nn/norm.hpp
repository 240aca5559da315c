#pragma once

#include <cmath>

#include "mbr/core/tensor.hpp"
#include "mbr/nn/param.hpp"

namespace mbr::nn {

enum class NormKind {
  Batch,          // plain BatchNorm2d
  InstanceBatch,  // IBN: instance norm on the first half of the channels, batch norm on the rest
};

// 2-D feature-map normalization with affine parameters. Batch statistics in
// training mode, running statistics in eval mode (batch half only; the
// instance half always normalizes per sample).
template <typename S>
class Norm2d {
 public:
  Norm2d() = default;
  explicit Norm2d(Index channels, NormKind kind = NormKind::Batch)
      : channels_(channels), kind_(kind) {
    gamma_.init(channels);
    beta_.init(channels);
    gamma_.value.setOnes();
    running_mean_.setZero(channels);
    running_var_.setOnes(channels);
    if (kind_ == NormKind::InstanceBatch)
      MBR_CHECK(channels % 2 == 0, "IBN needs an even channel count");
  }

  Index channels() const { return channels_; }
  Index in_split() const { return kind_ == NormKind::InstanceBatch ? channels_ / 2 : 0; }
  Index param_count() const { return 2 * channels_; }

  void collect(const std::string& prefix, ParamRefs<S>& out) {
    out.push_back({prefix + ".gamma", &gamma_});
    out.push_back({prefix + ".beta", &beta_});
  }
  void collect_buffers(const std::string& prefix, BufferRefs<S>& out) {
    out.push_back({prefix + ".rmean", &running_mean_});
    out.push_back({prefix + ".rvar", &running_var_});
  }

  void forward(const Tensor4<S>& x, Tensor4<S>& y, bool train) {
    MBR_CHECK(x.c() == channels_, "norm channel mismatch");
    y.resize(x.n(), x.c(), x.h(), x.w());
    const Index n = x.n(), hw = x.spatial(), split = in_split();

    if (split > 0) {
      in_mean_.resize(n, split);
      in_invstd_.resize(n, split);
      for (Index i = 0; i < n; ++i)
        for (Index c = 0; c < split; ++c) {
          MapConstVec<S> row(x.sample(i) + c * hw, hw);
          const S mean = row.mean();
          const S var = (row.array() - mean).square().sum() / S(hw);
          const S invstd = S(1) / std::sqrt(var + eps_);
          in_mean_(i, c) = mean;
          in_invstd_(i, c) = invstd;
          MapVec<S>(y.sample(i) + c * hw, hw) =
              ((row.array() - mean) * invstd * gamma_.value[c] + beta_.value[c]).matrix();
        }
    }

    if (train) {
      mean_.resize(channels_);
      invstd_.resize(channels_);
      const S count = S(n * hw);
      for (Index c = split; c < channels_; ++c) {
        S sum = S(0), sq = S(0);
        for (Index i = 0; i < n; ++i) {
          MapConstVec<S> row(x.sample(i) + c * hw, hw);
          sum += row.sum();
          sq += row.squaredNorm();
        }
        const S mean = sum / count;
        const S var = std::max<S>(sq / count - mean * mean, S(0));
        mean_[c] = mean;
        invstd_[c] = S(1) / std::sqrt(var + eps_);
        running_mean_[c] = (S(1) - momentum_) * running_mean_[c] + momentum_ * mean;
        const S unbiased = count > 1 ? var * count / (count - 1) : var;
        running_var_[c] = (S(1) - momentum_) * running_var_[c] + momentum_ * unbiased;
      }
      last_train_ = true;
    } else {
      last_train_ = false;
    }

    for (Index c = split; c < channels_; ++c) {
      const S mean = train ? mean_[c] : running_mean_[c];
      const S invstd = train ? invstd_[c] : S(1) / std::sqrt(running_var_[c] + eps_);
      const S a = gamma_.value[c] * invstd;
      const S b = beta_.value[c] - mean * a;
      for (Index i = 0; i < n; ++i) {
        MapConstVec<S> row(x.sample(i) + c * hw, hw);
        MapVec<S>(y.sample(i) + c * hw, hw) = (row.array() * a + b).matrix();
      }
    }
  }

  // eval-mode, no state touched
  void forward_eval(const Tensor4<S>& x, Tensor4<S>& y) const {
    MBR_CHECK(x.c() == channels_, "norm channel mismatch");
    y.resize(x.n(), x.c(), x.h(), x.w());
    const Index n = x.n(), hw = x.spatial(), split = in_split();
    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < split; ++c) {
        MapConstVec<S> row(x.sample(i) + c * hw, hw);
        const S mean = row.mean();
        const S var = (row.array() - mean).square().sum() / S(hw);
        const S invstd = S(1) / std::sqrt(var + eps_);
        MapVec<S>(y.sample(i) + c * hw, hw) =
            ((row.array() - mean) * invstd * gamma_.value[c] + beta_.value[c]).matrix();
      }
    for (Index c = split; c < channels_; ++c) {
      const S invstd = S(1) / std::sqrt(running_var_[c] + eps_);
      const S a = gamma_.value[c] * invstd;
      const S b = beta_.value[c] - running_mean_[c] * a;
      for (Index i = 0; i < n; ++i)
        MapVec<S>(y.sample(i) + c * hw, hw) =
            (MapConstVec<S>(x.sample(i) + c * hw, hw).array() * a + b).matrix();
    }
  }

  // train-mode backward; x must be the tensor passed to the last forward
  void backward(const Tensor4<S>& x, const Tensor4<S>& dy, Tensor4<S>& dx) {
    MBR_CHECK(last_train_, "norm backward requires a train-mode forward");
    dx.resize(x.n(), x.c(), x.h(), x.w());
    const Index n = x.n(), hw = x.spatial(), split = in_split();

    for (Index i = 0; i < n; ++i)
      for (Index c = 0; c < split; ++c) {
        MapConstVec<S> xr(x.sample(i) + c * hw, hw);
        MapConstVec<S> dyr(dy.sample(i) + c * hw, hw);
        const S mean = in_mean_(i, c), invstd = in_invstd_(i, c);
        ArrX<S> xhat = (xr.array() - mean) * invstd;
        const S sum_dy = dyr.sum();
        const S sum_dy_xhat = (dyr.array() * xhat).sum();
        gamma_.grad[c] += sum_dy_xhat;
        beta_.grad[c] += sum_dy;
        const S inv_n = S(1) / S(hw);
        MapVec<S>(dx.sample(i) + c * hw, hw) =
            (gamma_.value[c] * invstd *
             (dyr.array() - sum_dy * inv_n - xhat * (sum_dy_xhat * inv_n)))
                .matrix();
      }

    const S inv_count = S(1) / S(n * hw);
    for (Index c = split; c < channels_; ++c) {
      const S mean = mean_[c], invstd = invstd_[c];
      S sum_dy = S(0), sum_dy_xhat = S(0);
      for (Index i = 0; i < n; ++i) {
        MapConstVec<S> xr(x.sample(i) + c * hw, hw);
        MapConstVec<S> dyr(dy.sample(i) + c * hw, hw);
        sum_dy += dyr.sum();
        sum_dy_xhat += (dyr.array() * ((xr.array() - mean) * invstd)).sum();
      }
      gamma_.grad[c] += sum_dy_xhat;
      beta_.grad[c] += sum_dy;
      const S a = gamma_.value[c] * invstd;
      for (Index i = 0; i < n; ++i) {
        MapConstVec<S> xr(x.sample(i) + c * hw, hw);
        MapConstVec<S> dyr(dy.sample(i) + c * hw, hw);
        MapVec<S>(dx.sample(i) + c * hw, hw) =
            (a * (dyr.array() - sum_dy * inv_count -
                  ((xr.array() - mean) * invstd) * (sum_dy_xhat * inv_count)))
                .matrix();
      }
    }
  }

  Param<S>& gamma() { return gamma_; }
  Param<S>& beta() { return beta_; }
  VecX<S>& running_mean() { return running_mean_; }
  VecX<S>& running_var() { return running_var_; }

 private:
  Index channels_ = 0;
  NormKind kind_ = NormKind::Batch;
  S momentum_ = S(0.1), eps_ = S(1e-5);
  Param<S> gamma_, beta_;
  VecX<S> running_mean_, running_var_;
  VecX<S> mean_, invstd_;
  MatX<S> in_mean_, in_invstd_;
  bool last_train_ = false;
};

// Batch normalization over feature vectors (rows = samples).
template <typename S>
class BatchNorm1d {
 public:
  BatchNorm1d() = default;
  explicit BatchNorm1d(Index features, bool bias_trainable = true) : features_(features) {
    gamma_.init(features);
    beta_.init(features);
    gamma_.value.setOnes();
    beta_.trainable = bias_trainable;
    running_mean_.setZero(features);
    running_var_.setOnes(features);
  }

  Index features() const { return features_; }
  Index param_count() const { return 2 * features_; }

  void collect(const std::string& prefix, ParamRefs<S>& out) {
    out.push_back({prefix + ".gamma", &gamma_});
    out.push_back({prefix + ".beta", &beta_});
  }
  void collect_buffers(const std::string& prefix, BufferRefs<S>& out) {
    out.push_back({prefix + ".rmean", &running_mean_});
    out.push_back({prefix + ".rvar", &running_var_});
  }

  RowMatX<S> forward(const RowMatX<S>& x, bool train) {
    MBR_CHECK(x.cols() == features_, "bn1d feature mismatch");
    const Index n = x.rows();
    RowMatX<S> y(n, features_);
    if (train) {
      MBR_CHECK(n >= 2, "bn1d training needs batch >= 2");
      mean_ = x.colwise().mean();
      VecX<S> var(features_);
      for (Index c = 0; c < features_; ++c)
        var[c] = std::max<S>((x.col(c).array() - mean_[c]).square().sum() / S(n), S(0));
      invstd_.resize(features_);
      for (Index c = 0; c < features_; ++c) invstd_[c] = S(1) / std::sqrt(var[c] + eps_);
      running_mean_ = (S(1) - momentum_) * running_mean_ + momentum_ * mean_;
      running_var_ = (S(1) - momentum_) * running_var_ +
                     momentum_ * var * (n > 1 ? S(n) / S(n - 1) : S(1));
      last_train_ = true;
    } else {
      mean_ = running_mean_;
      invstd_.resize(features_);
      for (Index c = 0; c < features_; ++c)
        invstd_[c] = S(1) / std::sqrt(running_var_[c] + eps_);
      last_train_ = false;
    }
    for (Index c = 0; c < features_; ++c)
      y.col(c) = ((x.col(c).array() - mean_[c]) * invstd_[c] * gamma_.value[c] + beta_.value[c])
                     .matrix();
    return y;
  }

  RowMatX<S> forward_eval(const RowMatX<S>& x) const {
    MBR_CHECK(x.cols() == features_, "bn1d feature mismatch");
    RowMatX<S> y(x.rows(), features_);
    for (Index c = 0; c < features_; ++c) {
      const S invstd = S(1) / std::sqrt(running_var_[c] + eps_);
      y.col(c) = ((x.col(c).array() - running_mean_[c]) * invstd * gamma_.value[c] +
                  beta_.value[c])
                     .matrix();
    }
    return y;
  }

  RowMatX<S> backward(const RowMatX<S>& x, const RowMatX<S>& dy) {
    MBR_CHECK(last_train_, "bn1d backward requires a train-mode forward");
    const Index n = x.rows();
    RowMatX<S> dx(n, features_);
    const S inv_n = S(1) / S(n);
    for (Index c = 0; c < features_; ++c) {
      ArrX<S> xhat = (x.col(c).array() - mean_[c]) * invstd_[c];
      const S sum_dy = dy.col(c).sum();
      const S sum_dy_xhat = (dy.col(c).array() * xhat).sum();
      gamma_.grad[c] += sum_dy_xhat;
      beta_.grad[c] += sum_dy;
      dx.col(c) = (gamma_.value[c] * invstd_[c] *
                   (dy.col(c).array() - sum_dy * inv_n - xhat * (sum_dy_xhat * inv_n)))
                      .matrix();
    }
    return dx;
  }

  Param<S>& gamma() { return gamma_; }
  Param<S>& beta() { return beta_; }
  VecX<S>& running_mean() { return running_mean_; }
  VecX<S>& running_var() { return running_var_; }

 private:
  Index features_ = 0;
  S momentum_ = S(0.1), eps_ = S(1e-5);
  Param<S> gamma_, beta_;
  VecX<S> running_mean_, running_var_;
  VecX<S> mean_, invstd_;
  bool last_train_ = false;
};

}  // namespace mbr::nn
