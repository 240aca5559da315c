#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mbr/model/branch.hpp"
#include "mbr/nn/linear.hpp"
#include "mbr/nn/norm.hpp"

namespace mbr::model {

// classification head: batch-norm neck (frozen bias) + bias-free classifier
template <typename S>
class ClsHead {
 public:
  ClsHead() = default;
  ClsHead(Index dim, Index n_classes)
      : neck_(dim, /*bias_trainable=*/false), fc_(dim, n_classes) {}

  void init(Rng& rng) { fc_.init_normal(rng, 0.001); }
  void collect(const std::string& p, nn::ParamRefs<S>& out) {
    neck_.collect(p + ".neck", out);
    fc_.collect(p + ".fc", out);
  }
  void collect_buffers(const std::string& p, nn::BufferRefs<S>& out) {
    neck_.collect_buffers(p + ".neck", out);
  }

  RowMatX<S> forward(const RowMatX<S>& emb, bool train) {
    in_ = emb;
    neck_out_ = neck_.forward(emb, train);
    return fc_.forward(neck_out_);
  }
  RowMatX<S> forward_eval(const RowMatX<S>& emb) const {
    return fc_.forward(neck_.forward_eval(emb));
  }
  RowMatX<S> backward(const RowMatX<S>& dlogits) {
    RowMatX<S> dneck = fc_.backward(neck_out_, dlogits);
    return neck_.backward(in_, dneck);
  }

  nn::BatchNorm1d<S>& neck() { return neck_; }
  nn::Linear<S>& fc() { return fc_; }
  const nn::Linear<S>& fc() const { return fc_; }

 private:
  nn::BatchNorm1d<S> neck_;
  nn::Linear<S> fc_;
  RowMatX<S> in_, neck_out_;
};

struct UnitInfo {
  Index branch = 0;
  Index group = 0;
  loss::Role role = loss::Role::Both;
  Index dim = 0;
  Index offset = 0;  // column offset inside f_g
  Index head = -1;   // index into heads(), -1 if none
};

template <typename S>
struct ForwardResult {
  // loss-facing embedding per unit: the raw GAP output, or the normalized
  // unit plus its side embedding when the model carries a side table
  std::vector<RowMatX<S>> units;
  std::vector<loss::Role> roles;
  std::vector<RowMatX<S>> logits;  // empty matrix for units without a head
  RowMatX<S> global;               // f_g: L2-normalized units (+ side embeddings), concatenated
};

template <typename S>
struct UnitGrads {
  std::vector<RowMatX<S>> dunits;   // empty matrix = no metric-path gradient
  std::vector<RowMatX<S>> dlogits;  // empty matrix = no classification gradient
};

// The multi-branch model: shared trunk, per-branch stage 4, unit embeddings,
// optional camera/view side-embedding table and per-unit classifier heads.
template <typename S>
class MbrModel {
 public:
  explicit MbrModel(const ArchitectureSpec& spec, Rng rng = Rng(0)) : spec_(spec) {
    spec_.validate();
    backbone_ = Backbone<S>(spec_.backbone);
    const Index map = spec_.feature_map_size();
    Index offset = 0;
    for (size_t b = 0; b < spec_.branches.size(); ++b) {
      const BranchSpec& bs = spec_.branches[b];
      branches_.emplace_back(bs, map, map, spec_.stride_last_stage);
      for (Index g = 0; g < bs.groups; ++g) {
        UnitInfo u;
        u.branch = Index(b);
        u.group = g;
        u.role = bs.roles[size_t(g)];
        u.dim = bs.unit_dim();
        u.offset = offset;
        offset += u.dim;
        units_.push_back(u);
      }
    }
    if (spec_.n_classes > 0) {
      for (auto& u : units_) {
        if (u.role == loss::Role::Metric) continue;
        u.head = Index(heads_.size());
        heads_.emplace_back(u.dim, spec_.n_classes);
      }
    }
    if (spec_.lai) {
      lai_table_.init(global_dim() * spec_.lai->n_cam * spec_.lai->n_view);  // zero init
    }
    init_params(rng);
  }

  const ArchitectureSpec& spec() const { return spec_; }
  Index global_dim() const { return spec_.global_dim(); }
  const std::vector<UnitInfo>& units() const { return units_; }
  bool has_lai() const { return spec_.lai.has_value(); }
  bool has_bot() const { return spec_.has_bot(); }

  Backbone<S>& backbone() { return backbone_; }
  const Backbone<S>& backbone() const { return backbone_; }
  std::vector<Branch<S>>& branches() { return branches_; }
  const std::vector<Branch<S>>& branches() const { return branches_; }
  std::vector<ClsHead<S>>& heads() { return heads_; }
  const std::vector<ClsHead<S>>& heads() const { return heads_; }
  nn::Param<S>& lai_table() { return lai_table_; }
  const nn::Param<S>& lai_table() const { return lai_table_; }

  nn::ParamRefs<S> params() {
    nn::ParamRefs<S> out;
    backbone_.collect(out);
    for (size_t b = 0; b < branches_.size(); ++b)
      branches_[b].collect("branch" + std::to_string(b), out);
    for (size_t h = 0; h < heads_.size(); ++h)
      heads_[h].collect("head" + std::to_string(h), out);
    if (has_lai()) out.push_back({"lai.table", &lai_table_});
    return out;
  }
  nn::BufferRefs<S> buffers() {
    nn::BufferRefs<S> out;
    backbone_.collect_buffers(out);
    for (size_t b = 0; b < branches_.size(); ++b)
      branches_[b].collect_buffers("branch" + std::to_string(b), out);
    for (size_t h = 0; h < heads_.size(); ++h)
      heads_[h].collect_buffers("head" + std::to_string(h), out);
    return out;
  }
  // stem + stages 1-3: the freeze set for two-phase fine-tuning
  nn::ParamRefs<S> shared_params() {
    nn::ParamRefs<S> out;
    backbone_.collect(out);
    return out;
  }

  void zero_grad() {
    for (auto& p : params()) p.param->zero_grad();
  }

  // shared trunk output, spec'd shape (B, 1024, input/16, input/16)
  const Tensor4<S>& forward_shared(const Tensor4<S>& x, bool train) {
    check_input(x);
    return backbone_.forward(x, train);
  }
  Tensor4<S> forward_shared_eval(const Tensor4<S>& x) const {
    check_input(x);
    Tensor4<S> fl3;
    backbone_.forward_eval(x, fl3);
    return fl3;
  }

  ForwardResult<S> forward(const Tensor4<S>& x, const std::vector<int>& cams,
                           const std::vector<int>& views, bool train) {
    check_input(x);
    const Index b = x.n();
    const Tensor4<S>& fl3 = backbone_.forward(x, train);
    fl3_h_ = fl3.h();
    fl3_w_ = fl3.w();

    raw_units_.assign(units_.size(), RowMatX<S>());
    for (size_t br = 0; br < branches_.size(); ++br) {
      const RowMatX<S>& emb = branches_[br].forward(fl3, train);
      split_units(Index(br), emb);
    }

    ForwardResult<S> res;
    res.roles.resize(units_.size());
    res.units.resize(units_.size());
    res.logits.resize(units_.size());
    res.global.resize(b, global_dim());

    norm_units_.assign(units_.size(), RowMatX<S>());
    norms_.assign(units_.size(), VecX<S>());
    const bool lai = has_lai();
    if (lai) check_metadata(b, cams, views);

    for (size_t u = 0; u < units_.size(); ++u) {
      const UnitInfo& info = units_[u];
      res.roles[u] = info.role;
      nn::l2_normalize_rows(raw_units_[u], norm_units_[u], norms_[u]);
      RowMatX<S> unit_for_global = norm_units_[u];
      if (lai) {
        for (Index i = 0; i < b; ++i)
          unit_for_global.row(i) += lai_slice(cams[size_t(i)], views[size_t(i)], info).transpose();
        res.units[u] = unit_for_global;
      } else {
        res.units[u] = raw_units_[u];
      }
      res.global.middleCols(info.offset, info.dim) = unit_for_global;
      if (info.head >= 0) res.logits[u] = heads_[size_t(info.head)].forward(res.units[u], train);
    }
    if (lai) {
      lai_cams_ = cams;
      lai_views_ = views;
    }
    return res;
  }

  // Accumulates parameter gradients. `x` must be the batch from the last
  // train-mode forward.
  void backward(const Tensor4<S>& x, const UnitGrads<S>& grads) {
    const Index b = x.n();
    Tensor4<S> d_fl3(b, spec_.shared_channels(), fl3_h_, fl3_w_);

    std::vector<RowMatX<S>> d_raw(units_.size());
    for (size_t u = 0; u < units_.size(); ++u) {
      const UnitInfo& info = units_[u];
      RowMatX<S> d = RowMatX<S>::Zero(b, info.dim);
      bool any = false;
      if (u < grads.dunits.size() && grads.dunits[u].size() > 0) {
        d += grads.dunits[u];
        any = true;
      }
      if (info.head >= 0 && u < grads.dlogits.size() && grads.dlogits[u].size() > 0) {
        d += heads_[size_t(info.head)].backward(grads.dlogits[u]);
        any = true;
      }
      if (!any) {
        d_raw[u] = RowMatX<S>::Zero(b, info.dim);
        continue;
      }
      if (has_lai()) {
        // loss-facing unit = normalize(raw) + A[cam, view]; route into both
        for (Index i = 0; i < b; ++i)
          lai_grad_slice(lai_cams_[size_t(i)], lai_views_[size_t(i)], info) +=
              d.row(i).transpose();
        nn::l2_normalize_rows_backward(raw_units_[u], norms_[u], d, d_raw[u]);
      } else {
        d_raw[u] = std::move(d);
      }
    }

    for (size_t br = 0; br < branches_.size(); ++br) {
      const BranchSpec& bs = spec_.branches[br];
      RowMatX<S> demb(b, bs.out_channels);
      Index col = 0;
      for (size_t u = 0; u < units_.size(); ++u) {
        if (units_[u].branch != Index(br)) continue;
        demb.middleCols(col, units_[u].dim) = d_raw[u];
        col += units_[u].dim;
      }
      branches_[br].backward(demb, d_fl3);
    }
    backbone_.backward(x, d_fl3);
  }

  // Retrieval descriptor. Side embeddings are applied only when the model has
  // them and `apply_lai` is set (callers pass false when metadata is absent).
  RowMatX<S> forward_eval(const Tensor4<S>& x, const std::vector<int>& cams,
                          const std::vector<int>& views, bool apply_lai = true) const {
    check_input(x);
    Tensor4<S> fl3;
    backbone_.forward_eval(x, fl3);
    const Index b = x.n();
    const bool lai = has_lai() && apply_lai;
    if (lai) check_metadata(b, cams, views);
    RowMatX<S> global(b, global_dim());
    for (size_t br = 0; br < branches_.size(); ++br) {
      RowMatX<S> emb = branches_[br].forward_eval(fl3);
      Index local = 0;
      for (const auto& info : units_) {
        if (info.branch != Index(br)) continue;
        RowMatX<S> unit = emb.middleCols(local, info.dim);
        RowMatX<S> normed;
        VecX<S> norms;
        nn::l2_normalize_rows(unit, normed, norms);
        if (lai)
          for (Index i = 0; i < b; ++i)
            normed.row(i) += lai_slice(cams[size_t(i)], views[size_t(i)], info).transpose();
        global.middleCols(info.offset, info.dim) = normed;
        local += info.dim;
      }
    }
    return global;
  }

 private:
  void check_input(const Tensor4<S>& x) const {
    MBR_CHECK(x.c() == 3 && x.h() == spec_.input_size && x.w() == spec_.input_size,
              "model built for ", spec_.input_size, "x", spec_.input_size, "x3 input, got ",
              x.h(), "x", x.w(), "x", x.c());
  }

  void check_metadata(Index b, const std::vector<int>& cams, const std::vector<int>& views) const {
    MBR_CHECK(Index(cams.size()) == b && Index(views.size()) == b,
              "side embeddings need one camera/view id per sample");
    for (Index i = 0; i < b; ++i) {
      if (cams[size_t(i)] < 0 || cams[size_t(i)] >= spec_.lai->n_cam)
        fail("camera id ", cams[size_t(i)], " out of range [0, ", spec_.lai->n_cam, ")");
      if (views[size_t(i)] < 0 || views[size_t(i)] >= spec_.lai->n_view)
        fail("view id ", views[size_t(i)], " out of range [0, ", spec_.lai->n_view, ")");
    }
  }

  // the (cam, view) slice of the side table owned by one unit
  Index lai_base(int cam, int view, const UnitInfo& info) const {
    return (Index(cam) * spec_.lai->n_view + Index(view)) * global_dim() + info.offset;
  }
  MapConstVec<S> lai_slice(int cam, int view, const UnitInfo& info) const {
    return MapConstVec<S>(lai_table_.value.data() + lai_base(cam, view, info), info.dim);
  }
  MapVec<S> lai_grad_slice(int cam, int view, const UnitInfo& info) {
    return MapVec<S>(lai_table_.grad.data() + lai_base(cam, view, info), info.dim);
  }

  void split_units(Index branch, const RowMatX<S>& emb) {
    Index local = 0;
    for (size_t u = 0; u < units_.size(); ++u) {
      if (units_[u].branch != branch) continue;
      raw_units_[u] = emb.middleCols(local, units_[u].dim);
      local += units_[u].dim;
    }
  }

  void init_params(Rng& rng) {
    backbone_.init(rng);
    for (auto& b : branches_) b.init(rng);
    for (auto& h : heads_) h.init(rng);
    // side table stays zero-initialized
  }

  ArchitectureSpec spec_;
  Backbone<S> backbone_;
  std::vector<Branch<S>> branches_;
  std::vector<ClsHead<S>> heads_;
  std::vector<UnitInfo> units_;
  nn::Param<S> lai_table_;
  // forward caches
  std::vector<RowMatX<S>> raw_units_, norm_units_;
  std::vector<VecX<S>> norms_;
  std::vector<int> lai_cams_, lai_views_;
  Index fl3_h_ = 0, fl3_w_ = 0;
};

}  // namespace mbr::model
