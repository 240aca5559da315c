#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <random>

#include "mbr/data/synth.hpp"
#include "mbr/eval/embeddings.hpp"
#include "mbr/eval/retrieval.hpp"

using namespace mbr;
using namespace mbr::eval;

namespace {

EmbeddingMatrix make_emb(const std::vector<std::vector<float>>& rows,
                         const std::vector<std::pair<int, int>>& id_cam) {
  EmbeddingMatrix m;
  m.rows.resize(Index(rows.size()), Index(rows[0].size()));
  m.labels.resize(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t j = 0; j < rows[i].size(); ++j) m.rows(Index(i), Index(j)) = rows[i][j];
    m.labels[i] = {"img" + std::to_string(i), id_cam[i].first, id_cam[i].second, -1};
  }
  return m;
}

// naive O(Q*G^2) reference: full selection sort per query, direct AP
RetrievalResult naive_rank_and_score(const EmbeddingMatrix& query,
                                     const EmbeddingMatrix& gallery, bool filter) {
  const Index q = query.count(), g = gallery.count();
  RetrievalResult res;
  res.cmc.assign(size_t(g), 0.0);
  double ap_total = 0.0;
  for (Index qi = 0; qi < q; ++qi) {
    std::vector<double> dist(static_cast<size_t>(g));
    for (Index gi = 0; gi < g; ++gi) {
      double d2 = 0;
      for (Index c = 0; c < query.dim(); ++c) {
        const double d = double(query.rows(qi, c)) - double(gallery.rows(gi, c));
        d2 += d * d;
      }
      dist[size_t(gi)] = d2;
    }
    // selection sort (stable: strict less keeps original order on ties)
    std::vector<Index> order;
    std::vector<char> taken(static_cast<size_t>(g), 0);
    for (Index n = 0; n < g; ++n) {
      Index best = -1;
      for (Index gi = 0; gi < g; ++gi) {
        if (taken[size_t(gi)]) continue;
        if (best < 0 || dist[size_t(gi)] < dist[size_t(best)]) best = gi;
      }
      taken[size_t(best)] = 1;
      order.push_back(best);
    }
    const auto& ql = query.labels[size_t(qi)];
    Index rank = 0, seen = 0, hit = -1;
    double ap = 0;
    for (Index gi : order) {
      const auto& gl = gallery.labels[size_t(gi)];
      if (filter && gl.vehicle_id == ql.vehicle_id && gl.camera_id == ql.camera_id) continue;
      ++rank;
      if (gl.vehicle_id == ql.vehicle_id) {
        ++seen;
        ap += double(seen) / double(rank);
        if (hit < 0) hit = rank;
      }
    }
    if (seen == 0) {
      ++res.n_excluded;
      continue;
    }
    ++res.n_queries;
    ap /= double(seen);
    res.per_query_ap.push_back(ap);
    ap_total += ap;
    res.cmc[size_t(hit - 1)] += 1;
  }
  res.mAP = ap_total / double(res.n_queries);
  double cum = 0;
  for (auto& v : res.cmc) {
    cum += v;
    v = cum / double(res.n_queries);
  }
  return res;
}

void random_set(std::mt19937_64& gen, Index q, Index g, Index dim, Index n_ids, Index n_cams,
                EmbeddingMatrix& query, EmbeddingMatrix& gallery) {
  std::normal_distribution<float> nd(0.f, 1.f);
  auto fill = [&](EmbeddingMatrix& m, Index n, const char* prefix) {
    m.rows.resize(n, dim);
    m.labels.resize(size_t(n));
    for (Index i = 0; i < n; ++i) {
      for (Index c = 0; c < dim; ++c) m.rows(i, c) = nd(gen);
      m.labels[size_t(i)] = {prefix + std::to_string(i), int(gen() % std::uint64_t(n_ids)),
                             int(gen() % std::uint64_t(n_cams)), -1};
    }
  };
  fill(query, q, "q");
  fill(gallery, g, "g");
}

}  // namespace

TEST_CASE("textbook average-precision example") {
  // ranked gallery pattern (relevant, nonrelevant, relevant):
  // AP = (1/1 + 2/3) / 2 = 0.8333...
  EmbeddingMatrix query = make_emb({{0.f}}, {{1, 0}});
  EmbeddingMatrix gallery =
      make_emb({{0.1f}, {0.2f}, {0.3f}}, {{1, 1}, {2, 0}, {1, 2}});
  RetrievalResult r = rank_and_score(query, gallery);
  CHECK(r.mAP == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
  CHECK(r.cmc_at(1) == 1.0);
  CHECK(r.n_queries == 1);
}

TEST_CASE("perfect retrieval scores one") {
  EmbeddingMatrix query = make_emb({{1.f, 0.f}}, {{5, 0}});
  EmbeddingMatrix gallery = make_emb({{1.f, 0.f}, {9.f, 9.f}, {-4.f, 2.f}},
                                     {{5, 1}, {6, 0}, {7, 0}});
  RetrievalResult r = rank_and_score(query, gallery);
  CHECK(r.mAP == 1.0);
  CHECK(r.cmc_at(1) == 1.0);
  CHECK(r.cmc_at(5) == 1.0);
}

TEST_CASE("matches the naive reference exactly on random sets") {
  std::mt19937_64 gen(17);
  for (int rep = 0; rep < 5; ++rep) {
    EmbeddingMatrix query, gallery;
    random_set(gen, 30, 100, 8, 6, 4, query, gallery);
    for (bool filter : {true, false}) {
      RetrievalResult fast = rank_and_score(query, gallery, {filter});
      RetrievalResult ref = naive_rank_and_score(query, gallery, filter);
      CHECK(fast.mAP == ref.mAP);
      CHECK(fast.n_queries == ref.n_queries);
      CHECK(fast.n_excluded == ref.n_excluded);
      REQUIRE(fast.cmc.size() == ref.cmc.size());
      for (size_t k = 0; k < ref.cmc.size(); ++k) CHECK(fast.cmc[k] == ref.cmc[k]);
      for (size_t i = 0; i < ref.per_query_ap.size(); ++i)
        CHECK(fast.per_query_ap[i] == ref.per_query_ap[i]);
    }
  }
}

TEST_CASE("ranking is scale invariant") {
  std::mt19937_64 gen(23);
  EmbeddingMatrix query, gallery;
  random_set(gen, 12, 40, 6, 4, 3, query, gallery);
  RetrievalResult base = rank_and_score(query, gallery);
  query.rows *= 3.5f;
  gallery.rows *= 3.5f;
  RetrievalResult scaled = rank_and_score(query, gallery);
  CHECK(base.mAP == scaled.mAP);
  CHECK(base.cmc == scaled.cmc);
}

TEST_CASE("a farther distractor never changes rank-1") {
  std::mt19937_64 gen(29);
  EmbeddingMatrix query, gallery;
  random_set(gen, 10, 30, 4, 4, 3, query, gallery);
  RetrievalResult base = rank_and_score(query, gallery);

  // append a gallery row far away from every query
  EmbeddingMatrix bigger = gallery;
  bigger.rows.conservativeResize(gallery.count() + 1, gallery.dim());
  bigger.rows.row(gallery.count()).setConstant(1e6f);
  bigger.labels.push_back({"far", 0, 1, -1});
  RetrievalResult more = rank_and_score(query, bigger);
  CHECK(base.cmc_at(1) == more.cmc_at(1));
}

TEST_CASE("mAP is one exactly when positives form a prefix") {
  // positives at ranks 1..3 -> mAP 1; swap one -> below 1
  EmbeddingMatrix query = make_emb({{0.f}}, {{1, 0}});
  EmbeddingMatrix prefix = make_emb({{0.1f}, {0.2f}, {0.3f}, {0.4f}},
                                    {{1, 1}, {1, 2}, {1, 3}, {2, 0}});
  CHECK(rank_and_score(query, prefix).mAP == 1.0);
  EmbeddingMatrix broken = make_emb({{0.1f}, {0.2f}, {0.3f}, {0.4f}},
                                    {{1, 1}, {2, 0}, {1, 2}, {1, 3}});
  CHECK(rank_and_score(query, broken).mAP < 1.0);
}

TEST_CASE("queries with no surviving positives are excluded and counted") {
  // the only positive shares the query's camera, so filtering removes it
  EmbeddingMatrix query = make_emb({{0.f}, {5.f}}, {{1, 0}, {2, 0}});
  EmbeddingMatrix gallery = make_emb({{0.1f}, {5.2f}, {9.f}},
                                     {{1, 0}, {2, 1}, {3, 0}});
  RetrievalResult r = rank_and_score(query, gallery);
  CHECK(r.n_excluded == 1);
  CHECK(r.n_queries == 1);
  auto j = r.to_json();
  CHECK(j.at("n_excluded") == 1);

  // with the filter off, the first query scores again
  RetrievalResult open = rank_and_score(query, gallery, {false});
  CHECK(open.n_excluded == 0);
  CHECK(open.n_queries == 2);

  // every query excluded is an error
  EmbeddingMatrix lonely = make_emb({{0.f}}, {{9, 0}});
  CHECK_THROWS_AS((void)rank_and_score(lonely, gallery), Error);
}

TEST_CASE("dimension mismatch is rejected") {
  EmbeddingMatrix q = make_emb({{0.f, 1.f}}, {{1, 0}});
  EmbeddingMatrix g = make_emb({{0.f}}, {{1, 1}});
  CHECK_THROWS_AS((void)rank_and_score(q, g), Error);
}

TEST_CASE("embedding container round trip") {
  std::mt19937_64 gen(31);
  EmbeddingMatrix m, g;
  random_set(gen, 7, 7, 5, 3, 2, m, g);
  m.labels[0].view_id = 4;
  const std::string path = "/tmp/mbr_emb_test.bin";
  save_embeddings(path, m);
  EmbeddingMatrix back = load_embeddings(path);
  CHECK(back.rows == m.rows);
  REQUIRE(back.labels.size() == m.labels.size());
  for (size_t i = 0; i < m.labels.size(); ++i) {
    CHECK(back.labels[i].image_id == m.labels[i].image_id);
    CHECK(back.labels[i].vehicle_id == m.labels[i].vehicle_id);
    CHECK(back.labels[i].camera_id == m.labels[i].camera_id);
    CHECK(back.labels[i].view_id == m.labels[i].view_id);
  }
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".labels.csv");
}

TEST_CASE("model embedding extraction: shape, determinism, zero-init side table") {
  namespace fs = std::filesystem;
  const std::string root = (fs::temp_directory_path() / "mbr_eval_extract").string();
  fs::remove_all(root);
  data::SynthConfig cfg;
  cfg.n_ids = 3;
  cfg.n_cams = 2;
  cfg.n_views = 2;
  cfg.imgs_per_id = 2;
  cfg.size = 64;
  data::DatasetTriplet t = data::synth_dataset(root, cfg);

  model::ArchitectureSpec spec = model::make_preset("MBR_R50-2G-LAI");
  spec.input_size = 64;
  spec.lai = model::LaiSpec{4, 2};
  model::MbrModel<float> m(spec, Rng(3));

  // duplicate record: identical rows
  data::DatasetManifest dup = t.query;
  dup.records.push_back(dup.records[0]);
  dup.records.back().image_id = "dup";

  EmbeddingMatrix with = extract_embeddings(m, dup, true, 4);
  CHECK(with.count() == Index(dup.records.size()));
  CHECK(with.dim() == 2048);
  CHECK(with.rows.row(0) == with.rows.row(with.count() - 1));

  EmbeddingMatrix without = extract_embeddings(m, dup, false, 4);
  CHECK(with.rows == without.rows);  // zero-initialized side table is a no-op

  fs::remove_all(root);
}
