#pragma once

#include <fstream>

#include "mbr/data/loader.hpp"
#include "mbr/eval/retrieval.hpp"
#include "mbr/io/blobs.hpp"
#include "mbr/model/model.hpp"

namespace mbr::eval {

// Runs the model in eval mode over a manifest and collects descriptor rows.
// Side embeddings are applied only when the model has them and every record
// carries the required metadata.
template <typename S>
EmbeddingMatrix extract_embeddings(model::MbrModel<S>& m, const data::DatasetManifest& man,
                                   bool lai_metadata = true, Index batch_size = 16,
                                   data::ImageCache* cache = nullptr) {
  EmbeddingMatrix out;
  const Index n = Index(man.records.size());
  out.rows.resize(n, m.global_dim());
  out.labels.resize(size_t(n));

  const bool needs_views = m.has_lai() && m.spec().lai->n_view > 1;
  data::AugmentConfig aug = data::AugmentConfig::disabled(m.spec().input_size);
  Rng rng(0);  // unused in eval mode
  data::ImageCache local_cache;
  if (!cache) cache = &local_cache;

  for (Index start = 0; start < n; start += batch_size) {
    const Index count = std::min(batch_size, n - start);
    std::vector<Index> idx(static_cast<size_t>(count));
    for (Index i = 0; i < count; ++i) idx[size_t(i)] = start + i;
    Tensor4<float> batch;
    data::BatchMeta meta =
        data::load_batch(man, idx, {}, /*train=*/false, aug, rng, cache, batch);

    Tensor4<S> x(batch.n(), batch.c(), batch.h(), batch.w());
    for (Index i = 0; i < batch.size(); ++i) x.data()[i] = S(batch.data()[i]);

    const bool apply_lai = lai_metadata && m.has_lai() && (!needs_views || meta.has_views);
    RowMatX<S> fg = m.forward_eval(x, meta.cams, meta.views, apply_lai);
    MBR_CHECK(fg.cols() == out.rows.cols(), "descriptor width changed across batches");
    for (Index i = 0; i < count; ++i) {
      for (Index c = 0; c < fg.cols(); ++c) out.rows(start + i, c) = float(fg(i, c));
      const auto& rec = man.records[size_t(start + i)];
      out.labels[size_t(start + i)] = {rec.image_id, rec.vehicle_id, rec.camera_id, rec.view_id};
    }
  }
  out.validate();
  return out;
}

// container + CSV label sidecar (<path>.labels.csv)
inline void save_embeddings(const std::string& path, const EmbeddingMatrix& m) {
  io::save_embedding_matrix(path, m.rows.data(), std::uint64_t(m.count()),
                            std::uint64_t(m.dim()));
  std::ofstream os(path + ".labels.csv", std::ios::trunc);
  if (!os) fail("cannot open '", path, ".labels.csv' for writing");
  os << "image_id,vehicle_id,camera_id,view_id\n";
  for (const auto& l : m.labels) {
    os << l.image_id << ',' << l.vehicle_id << ',' << l.camera_id << ',';
    if (l.view_id >= 0) os << l.view_id;
    os << '\n';
  }
}

inline EmbeddingMatrix load_embeddings(const std::string& path) {
  EmbeddingMatrix out;
  std::vector<float> data;
  std::uint64_t rows = 0, dim = 0;
  io::load_embedding_matrix(path, data, rows, dim);
  out.rows.resize(Index(rows), Index(dim));
  std::copy(data.begin(), data.end(), out.rows.data());

  std::ifstream is(path + ".labels.csv");
  if (!is) fail("missing label sidecar '", path, ".labels.csv'");
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    EmbeddingLabel l;
    std::string field;
    std::istringstream ls(line);
    std::getline(ls, l.image_id, ',');
    std::getline(ls, field, ',');
    l.vehicle_id = std::stoi(field);
    std::getline(ls, field, ',');
    l.camera_id = std::stoi(field);
    std::getline(ls, field, ',');
    l.view_id = field.empty() ? -1 : std::stoi(field);
    out.labels.push_back(std::move(l));
  }
  out.validate();
  return out;
}

}  // namespace mbr::eval
