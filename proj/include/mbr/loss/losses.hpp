#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mbr/core/common.hpp"
#include "mbr/core/tensor.hpp"

namespace mbr::loss {

// Role a branch unit plays in the total objective. Loss-branch-split models
// dedicate each unit to one loss; plain baselines apply both to every unit.
enum class Role { Cls, Metric, Both };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::Cls: return "cls";
    case Role::Metric: return "metric";
    case Role::Both: return "both";
  }
  return "?";
}

template <typename S>
struct Weights {
  S w_cls = S(0.6);
  S w_tri = S(1.0);
  S label_smoothing = S(0.1);
  S margin = S(0.1);
  // optional per-unit overrides; empty = use the global scalars
  std::vector<S> w_cls_per_unit;
  std::vector<S> w_tri_per_unit;

  S cls_weight(size_t unit) const {
    return unit < w_cls_per_unit.size() ? w_cls_per_unit[unit] : w_cls;
  }
  S tri_weight(size_t unit) const {
    return unit < w_tri_per_unit.size() ? w_tri_per_unit[unit] : w_tri;
  }
};

// Cross entropy over softmax(logits) against smoothed one-hot targets:
// on-class mass 1 - eps*(C-1)/C, off-class eps/C. Mean over the batch.
// If `dlogits` is given it receives d(loss)/d(logits).
template <typename S>
S ce_label_smoothing(const RowMatX<S>& logits, const std::vector<int>& targets, S epsilon,
                     RowMatX<S>* dlogits = nullptr) {
  const Index b = logits.rows(), c = logits.cols();
  MBR_CHECK(c >= 2, "need at least two classes");
  MBR_CHECK(static_cast<Index>(targets.size()) == b, "targets/logits size mismatch");
  MBR_CHECK(logits.allFinite(), "non-finite logits");
  MBR_CHECK(epsilon >= S(0) && epsilon < S(1), "label smoothing out of range");

  const S off = epsilon / S(c);
  const S on = S(1) - epsilon * S(c - 1) / S(c);
  if (dlogits) dlogits->resize(b, c);

  S total = S(0);
  for (Index i = 0; i < b; ++i) {
    MBR_CHECK(targets[i] >= 0 && targets[i] < c, "target class out of range");
    const auto row = logits.row(i);
    const S mx = row.maxCoeff();
    // log softmax via shifted log-sum-exp
    const S lse = std::log((row.array() - mx).exp().sum()) + mx;
    S loss_i = S(0);
    for (Index j = 0; j < c; ++j) {
      const S y = (j == targets[i]) ? on : off;
      loss_i -= y * (row(j) - lse);
    }
    total += loss_i;
    if (dlogits) {
      for (Index j = 0; j < c; ++j) {
        const S p = std::exp(row(j) - lse);
        const S y = (j == targets[i]) ? on : off;
        (*dlogits)(i, j) = (p - y) / S(b);
      }
    }
  }
  return total / S(b);
}

// Batch-hard triplet loss on Euclidean distances. Every batch element is an
// anchor; per anchor the farthest positive and the nearest negative are
// mined (ties broken toward the lowest index). Mean over anchors of
// max(0, margin + d_hard_pos - d_hard_neg).
template <typename S>
S batch_hard_triplet(const RowMatX<S>& emb, const std::vector<int>& ids, S margin,
                     RowMatX<S>* demb = nullptr) {
  const Index b = emb.rows();
  MBR_CHECK(static_cast<Index>(ids.size()) == b, "ids/embeddings size mismatch");
  MBR_CHECK(b >= 2, "batch too small for triplets");

  // pairwise Euclidean distances
  MatX<S> dist(b, b);
  for (Index i = 0; i < b; ++i) {
    dist(i, i) = S(0);
    for (Index j = i + 1; j < b; ++j) {
      S d2 = (emb.row(i) - emb.row(j)).squaredNorm();
      S d = std::sqrt(std::max(d2, S(0)));
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }

  if (demb) {
    demb->resize(b, emb.cols());
    demb->setZero();
  }

  const S dist_eps = S(1e-12);  // guards d'=x/d at coincident points
  S total = S(0);
  for (Index a = 0; a < b; ++a) {
    Index hard_p = -1, hard_n = -1;
    S dp = -std::numeric_limits<S>::infinity();
    S dn = std::numeric_limits<S>::infinity();
    for (Index j = 0; j < b; ++j) {
      if (j == a) continue;
      if (ids[j] == ids[a]) {
        if (dist(a, j) > dp) { dp = dist(a, j); hard_p = j; }
      } else {
        if (dist(a, j) < dn) { dn = dist(a, j); hard_n = j; }
      }
    }
    MBR_CHECK(hard_p >= 0, "anchor ", a, " has no positive (PK sampler contract violated)");
    MBR_CHECK(hard_n >= 0, "anchor ", a, " has no negative (PK sampler contract violated)");

    const S term = margin + dp - dn;
    if (term > S(0)) {
      total += term;
      if (demb) {
        const S inv_b = S(1) / S(b);
        // d(dp)/d(x) and -d(dn)/d(x) for the active anchor
        const S inv_dp = S(1) / std::max(dp, dist_eps);
        const S inv_dn = S(1) / std::max(dn, dist_eps);
        auto xa = emb.row(a), xp = emb.row(hard_p), xn = emb.row(hard_n);
        demb->row(a) += inv_b * ((xa - xp) * inv_dp - (xa - xn) * inv_dn);
        demb->row(hard_p) += inv_b * (xp - xa) * inv_dp;
        demb->row(hard_n) += inv_b * (xa - xn) * inv_dn;
      }
    }
  }
  return total / S(b);
}

// One unit's contribution to the combined objective.
template <typename S>
struct UnitOutput {
  const RowMatX<S>* emb = nullptr;     // required for Metric/Both
  const RowMatX<S>* logits = nullptr;  // required for Cls/Both
  Role role = Role::Both;
};

template <typename S>
struct UnitLoss {
  Role role;
  S cls = S(0);
  S tri = S(0);
  S weighted = S(0);
};

template <typename S>
struct TotalLoss {
  S total = S(0);
  std::vector<UnitLoss<S>> per_unit;
  // gradients parallel to the inputs; empty matrices where not applicable
  std::vector<RowMatX<S>> demb;
  std::vector<RowMatX<S>> dlogits;
};

// Weighted objective over all units: sum of w_cls * CE over classification
// units plus w_tri * triplet over metric units; Both-role units contribute
// both terms. Gradients are computed only when `with_grads` is set.
template <typename S>
TotalLoss<S> lbs_total(const std::vector<UnitOutput<S>>& units, const std::vector<int>& targets,
                       const Weights<S>& w, bool with_grads = false) {
  TotalLoss<S> out;
  out.per_unit.resize(units.size());
  out.demb.resize(units.size());
  out.dlogits.resize(units.size());

  for (size_t u = 0; u < units.size(); ++u) {
    const auto& unit = units[u];
    UnitLoss<S>& ul = out.per_unit[u];
    ul.role = unit.role;
    const bool wants_cls = unit.role != Role::Metric;
    const bool wants_tri = unit.role != Role::Cls;
    if (wants_cls) {
      MBR_CHECK(unit.logits != nullptr, "unit ", u, " has a classification role but no logits");
      RowMatX<S> dl;
      ul.cls = ce_label_smoothing<S>(*unit.logits, targets, w.label_smoothing,
                                     with_grads ? &dl : nullptr);
      if (with_grads) out.dlogits[u] = dl * w.cls_weight(u);
    }
    if (wants_tri) {
      MBR_CHECK(unit.emb != nullptr, "unit ", u, " has a metric role but no embedding");
      RowMatX<S> de;
      ul.tri = batch_hard_triplet<S>(*unit.emb, targets, w.margin, with_grads ? &de : nullptr);
      if (with_grads) out.demb[u] = de * w.tri_weight(u);
    }
    ul.weighted = (wants_cls ? w.cls_weight(u) * ul.cls : S(0)) +
                  (wants_tri ? w.tri_weight(u) * ul.tri : S(0));
    out.total += ul.weighted;
  }
  return out;
}

}  // namespace mbr::loss
