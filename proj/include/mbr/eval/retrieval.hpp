#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "mbr/core/parallel.hpp"
#include "mbr/core/tensor.hpp"

namespace mbr::eval {

struct EmbeddingLabel {
  std::string image_id;
  int vehicle_id = 0;
  int camera_id = 0;
  int view_id = -1;
};

// Embedding rows plus the identity/camera sidecar needed for protocol
// filtering.
struct EmbeddingMatrix {
  RowMatX<float> rows;
  std::vector<EmbeddingLabel> labels;

  Index count() const { return rows.rows(); }
  Index dim() const { return rows.cols(); }
  void validate() const {
    MBR_CHECK(Index(labels.size()) == rows.rows(), "embedding/label count mismatch");
    MBR_CHECK(rows.allFinite(), "non-finite embedding entries");
  }
};

struct RetrievalProtocol {
  // drop gallery entries sharing both identity and camera with the query
  bool filter_same_camera = true;
};

struct RetrievalResult {
  double mAP = 0.0;
  std::vector<double> cmc;  // cmc[k-1] = fraction with first hit at rank <= k
  std::vector<double> per_query_ap;
  Index n_queries = 0;   // scored queries
  Index n_excluded = 0;  // queries with no remaining positives

  double cmc_at(Index k) const {
    if (cmc.empty()) return 0.0;
    return cmc[size_t(std::min(k, Index(cmc.size())) - 1)];
  }
  nlohmann::json to_json() const {
    return {{"mAP", mAP},       {"cmc1", cmc_at(1)},          {"cmc5", cmc_at(5)},
            {"n_queries", n_queries}, {"n_excluded", n_excluded}};
  }
};

// Ranks the gallery per query by ascending Euclidean distance (stable in
// gallery order on ties), applies the protocol filter, and scores AP and CMC.
// Queries with no remaining positives are excluded from both metrics and
// counted. Per-query work is independent, so any parallel split over queries
// produces identical results.
inline RetrievalResult rank_and_score(const EmbeddingMatrix& query,
                                      const EmbeddingMatrix& gallery,
                                      const RetrievalProtocol& protocol = {}) {
  query.validate();
  gallery.validate();
  MBR_CHECK(query.dim() == gallery.dim(), "query/gallery dimension mismatch: ", query.dim(),
            " vs ", gallery.dim());
  const Index q = query.count(), g = gallery.count();
  MBR_CHECK(g > 0, "empty gallery");

  const Index max_rank = g;
  std::vector<double> ap(size_t(q), -1.0);  // -1 marks excluded
  std::vector<Index> first_hit(size_t(q), -1);

  parallel_for(q, [&](Index qi) {
    std::vector<double> dist(static_cast<size_t>(g));
    for (Index gi = 0; gi < g; ++gi) {
      double d2 = 0.0;
      const auto& qr = query.rows.row(qi);
      const auto& gr = gallery.rows.row(gi);
      for (Index c = 0; c < query.dim(); ++c) {
        const double d = double(qr[c]) - double(gr[c]);
        d2 += d * d;
      }
      dist[size_t(gi)] = d2;
    }
    std::vector<Index> order(static_cast<size_t>(g));
    std::iota(order.begin(), order.end(), Index(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return dist[size_t(a)] < dist[size_t(b)]; });

    const auto& ql = query.labels[size_t(qi)];
    Index relevant_total = 0, relevant_seen = 0, rank = 0;
    double ap_sum = 0.0;
    Index hit = -1;
    for (Index gi : order) {
      const auto& gl = gallery.labels[size_t(gi)];
      const bool junk = protocol.filter_same_camera && gl.vehicle_id == ql.vehicle_id &&
                        gl.camera_id == ql.camera_id;
      if (junk) continue;
      ++rank;  // 1-based rank in the filtered list
      if (gl.vehicle_id == ql.vehicle_id) {
        ++relevant_seen;
        ap_sum += double(relevant_seen) / double(rank);
        if (hit < 0) hit = rank;
      }
    }
    relevant_total = relevant_seen;
    if (relevant_total == 0) return;  // excluded
    ap[size_t(qi)] = ap_sum / double(relevant_total);
    first_hit[size_t(qi)] = hit;
  });

  RetrievalResult res;
  res.cmc.assign(size_t(max_rank), 0.0);
  double ap_total = 0.0;
  for (Index qi = 0; qi < q; ++qi) {
    if (ap[size_t(qi)] < 0) {
      ++res.n_excluded;
      continue;
    }
    ++res.n_queries;
    res.per_query_ap.push_back(ap[size_t(qi)]);
    ap_total += ap[size_t(qi)];
    res.cmc[size_t(first_hit[size_t(qi)] - 1)] += 1.0;
  }
  MBR_CHECK(res.n_queries > 0, "every query was excluded by the protocol filter");
  res.mAP = ap_total / double(res.n_queries);
  double cum = 0.0;
  for (auto& v : res.cmc) {
    cum += v;
    v = cum / double(res.n_queries);
  }
  return res;
}

}  // namespace mbr::eval
