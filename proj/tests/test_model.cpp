#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "mbr/core/parallel.hpp"
#include "mbr/loss/losses.hpp"
#include "mbr/model/checkpoint.hpp"
#include "mbr/model/model.hpp"
#include "mbr/nn/ops.hpp"

using namespace mbr;
using namespace mbr::model;

namespace {

// small-input spec for structural tests
ArchitectureSpec small_preset(const std::string& name, Index input = 64, Index classes = 0) {
  ArchitectureSpec spec = make_preset(name);
  spec.input_size = input;
  spec.n_classes = classes;
  return spec;
}

Tensor4<float> random_images(Index n, Index size, std::uint64_t seed) {
  Rng rng(seed);
  Tensor4<float> x(n, 3, size, size);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = float(rng.normal(0.0, 1.0));
  return x;
}

bool all_zero(const VecX<float>& v) {
  for (Index i = 0; i < v.size(); ++i)
    if (v[i] != 0.0f) return false;
  return true;
}

}  // namespace

TEST_CASE("preset descriptor dimensions match the published table") {
  struct Want { const char* name; Index slice, fg, units, unit_dim; };
  const Want table[] = {
      {"R50", 1024, 2048, 1, 2048},        {"BoT", 1024, 2048, 1, 2048},
      {"R50-2G", 512, 2048, 2, 1024},      {"R50-4G", 256, 2048, 4, 512},
      {"R50-2x2G", 512, 4096, 4, 1024},    {"R50-2B", 1024, 4096, 2, 2048},
      {"R50-4B", 1024, 8192, 4, 2048},     {"Hybrid-4G", 256, 2048, 4, 512},
      {"MBR-4G", 256, 2048, 4, 512},       {"Hybrid-2x2G", 512, 4096, 4, 1024},
      {"MBR-2x2G", 512, 4096, 4, 1024},    {"Hybrid-4B", 1024, 8192, 4, 2048},
      {"MBR-4B", 1024, 8192, 4, 2048},     {"MBR_R50-2G", 512, 2048, 2, 1024},
      {"MBR_R50-2x2G", 512, 4096, 4, 1024},
  };
  for (const auto& w : table) {
    ArchitectureSpec spec = make_preset(w.name);
    CHECK_MESSAGE(spec.global_dim() == w.fg, w.name);
    CHECK_MESSAGE(spec.unit_count() == w.units, w.name);
    for (const auto& b : spec.branches) {
      CHECK_MESSAGE(b.in_width() / b.groups == w.slice, w.name);
      CHECK_MESSAGE(b.unit_dim() == w.unit_dim, w.name);
    }
  }
}

TEST_CASE("unknown preset names are rejected with the valid list") {
  CHECK_THROWS_AS((void)make_preset("R51"), ValidationError);
  try {
    (void)make_preset("R51");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("R50-2x2G") != std::string::npos);
  }
}

TEST_CASE("lbs role assignment per preset family") {
  using loss::Role;
  auto roles_of = [](const std::string& name) {
    std::vector<Role> roles;
    for (const auto& b : make_preset(name).branches)
      for (auto r : b.roles) roles.push_back(r);
    return roles;
  };
  CHECK(roles_of("MBR_R50-2B") == std::vector<Role>{Role::Cls, Role::Metric});
  CHECK(roles_of("MBR_R50-2G") == std::vector<Role>{Role::Cls, Role::Metric});
  CHECK(roles_of("MBR-4B") ==
        std::vector<Role>{Role::Cls, Role::Metric, Role::Cls, Role::Metric});
  CHECK(roles_of("MBR_R50-2x2G") ==
        std::vector<Role>{Role::Cls, Role::Metric, Role::Cls, Role::Metric});
  CHECK(roles_of("R50-4G") ==
        std::vector<Role>{Role::Both, Role::Both, Role::Both, Role::Both});
}

TEST_CASE("shared trunk produces the contracted feature map shape") {
  set_num_threads(2);
  MbrModel<float> m(small_preset("R50", 256), Rng(1));
  Tensor4<float> x = random_images(2, 256, 7);
  Tensor4<float> fl3 = m.forward_shared_eval(x);
  CHECK(fl3.n() == 2);
  CHECK(fl3.c() == 1024);
  CHECK(fl3.h() == 16);
  CHECK(fl3.w() == 16);

  // wrong input size is a shape error
  Tensor4<float> bad = random_images(1, 128, 9);
  CHECK_THROWS_AS((void)m.forward_shared_eval(bad), Error);
}

TEST_CASE("zero-weight trunk propagates zeros") {
  MbrModel<float> m(small_preset("R50"), Rng(2));
  for (auto& p : m.params()) p.param->value.setZero();
  Tensor4<float> x = random_images(2, 64, 11);
  Tensor4<float> fl3 = m.forward_shared_eval(x);
  for (Index i = 0; i < fl3.size(); ++i) CHECK(fl3.data()[i] == 0.0f);
}

TEST_CASE("every unit slice of the descriptor is unit length") {
  for (const char* name : {"MBR_R50-2G", "MBR-4B"}) {
    MbrModel<float> m(small_preset(name), Rng(3));
    Tensor4<float> x = random_images(3, 64, 13);
    RowMatX<float> fg = m.forward_eval(x, {}, {});
    CHECK(fg.cols() == m.global_dim());
    for (const auto& u : m.units()) {
      for (Index i = 0; i < fg.rows(); ++i) {
        const float n = fg.row(i).middleCols(u.offset, u.dim).norm();
        CHECK(n == doctest::Approx(1.0f).epsilon(2e-4));
      }
    }
  }
}

TEST_CASE("eval-mode forward is deterministic and thread-safe") {
  MbrModel<float> m(small_preset("MBR_R50-2G"), Rng(4));
  Tensor4<float> x = random_images(2, 64, 17);
  RowMatX<float> a = m.forward_eval(x, {}, {});
  RowMatX<float> b;
  RowMatX<float> c;
  std::thread t1([&] { b = m.forward_eval(x, {}, {}); });
  std::thread t2([&] { c = m.forward_eval(x, {}, {}); });
  t1.join();
  t2.join();
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((a - c).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("training forward exposes logits for classification units only") {
  MbrModel<float> m(small_preset("MBR_R50-2G", 64, 5), Rng(5));
  Tensor4<float> x = random_images(4, 64, 19);
  auto res = m.forward(x, {}, {}, true);
  REQUIRE(res.units.size() == 2);
  CHECK(res.roles[0] == loss::Role::Cls);
  CHECK(res.roles[1] == loss::Role::Metric);
  CHECK(res.logits[0].rows() == 4);
  CHECK(res.logits[0].cols() == 5);
  CHECK(res.logits[1].size() == 0);
  CHECK(res.units[0].cols() == 1024);
  CHECK(res.global.cols() == 2048);
}

TEST_CASE("stage-4 gradients stay inside their own branch") {
  // Backprop one branch's loss; the sibling branch's stage-4 weights must
  // receive exactly zero gradient while the shared trunk receives signal.
  MbrModel<float> m(small_preset("MBR_R50-2B", 64, 4), Rng(6));
  Tensor4<float> x = random_images(4, 64, 23);
  std::vector<int> ids = {0, 0, 1, 1};

  auto res = m.forward(x, {}, {}, true);
  m.zero_grad();

  // unit 0 (branch 0) classification loss only
  RowMatX<float> dlogits;
  (void)loss::ce_label_smoothing<float>(res.logits[0], ids, 0.1f, &dlogits);
  UnitGrads<float> grads;
  grads.dunits.resize(2);
  grads.dlogits.resize(2);
  grads.dlogits[0] = dlogits;
  m.backward(x, grads);

  nn::ParamRefs<float> refs = m.params();
  bool trunk_nonzero = false;
  for (auto& r : refs) {
    const bool b0 = r.name.rfind("branch0", 0) == 0;
    const bool b1 = r.name.rfind("branch1", 0) == 0;
    const bool trunk = r.name.rfind("backbone", 0) == 0;
    if (b1) CHECK_MESSAGE(all_zero(r.param->grad), r.name);
    if (trunk && !all_zero(r.param->grad)) trunk_nonzero = true;
    if (b0 && r.name.find("conv") != std::string::npos)
      CHECK_MESSAGE(!all_zero(r.param->grad), r.name);
  }
  CHECK(trunk_nonzero);

  // now the metric branch only
  m.zero_grad();
  res = m.forward(x, {}, {}, true);
  RowMatX<float> demb;
  (void)loss::batch_hard_triplet<float>(res.units[1], ids, 0.1f, &demb);
  UnitGrads<float> g2;
  g2.dunits.resize(2);
  g2.dlogits.resize(2);
  g2.dunits[1] = demb;
  m.backward(x, g2);
  for (auto& r : m.params()) {
    if (r.name.rfind("branch0", 0) == 0) CHECK_MESSAGE(all_zero(r.param->grad), r.name);
    if (r.name.rfind("head", 0) == 0) CHECK_MESSAGE(all_zero(r.param->grad), r.name);
  }
}

TEST_CASE("grouped branches are channel-local") {
  MbrModel<float> m(small_preset("MBR_R50-2G"), Rng(7));
  Tensor4<float> x = random_images(2, 64, 29);
  Tensor4<float> fl3 = m.forward_shared_eval(x);

  RowMatX<float> base = m.branches()[0].forward_eval(fl3);
  // perturb the second group's input slice
  Tensor4<float> fl3p = fl3;
  for (Index i = 0; i < fl3p.n(); ++i) fl3p.chw(i).middleRows(512, 512).array() += 0.25f;
  RowMatX<float> moved = m.branches()[0].forward_eval(fl3p);

  CHECK((base.leftCols(1024) - moved.leftCols(1024)).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((base.rightCols(1024) - moved.rightCols(1024)).cwiseAbs().maxCoeff() > 0.0f);
}

TEST_CASE("side-embedding table starts as an exact no-op and has the claimed size") {
  ArchitectureSpec spec = make_preset("R50-LAI");
  CHECK(spec.lai.has_value());
  spec.input_size = 64;
  MbrModel<float> m(spec, Rng(8));

  // claimed size: D * n_cam * n_view per unit-set
  CHECK(m.lai_table().size() == 2048 * 20 * 8);
  CHECK(m.lai_table().size() == 327680);
  CHECK(all_zero(m.lai_table().value));

  Tensor4<float> x = random_images(2, 64, 31);
  std::vector<int> cams = {3, 19}, views = {0, 7};
  RowMatX<float> with = m.forward_eval(x, cams, views, true);
  RowMatX<float> without = m.forward_eval(x, cams, views, false);
  CHECK((with - without).cwiseAbs().maxCoeff() == 0.0f);

  // out-of-range metadata is an error
  CHECK_THROWS_AS((void)m.forward_eval(x, {20, 0}, {0, 0}, true), Error);
  CHECK_THROWS_AS((void)m.forward_eval(x, {0, 0}, {8, 0}, true), Error);

  // nonzero table entries shift exactly the addressed (cam, view) slice
  m.lai_table().value.setConstant(0.5f);
  RowMatX<float> shifted = m.forward_eval(x, cams, views, true);
  CHECK((shifted - without).cwiseAbs().maxCoeff() == doctest::Approx(0.5f));
}

TEST_CASE("grouped side table still totals one unit-set per descriptor width") {
  ArchitectureSpec spec = make_preset("MBR_R50-4G-LAI");
  CHECK(spec.global_dim() == 2048);
  spec.input_size = 64;
  MbrModel<float> m(spec, Rng(9));
  CHECK(m.lai_table().size() == 327680);  // same budget as the ungrouped table

  ArchitectureSpec spec4b = make_preset("MBR-4B-LAI");
  spec4b.input_size = 64;
  MbrModel<float> m4(spec4b, Rng(10));
  CHECK(m4.lai_table().size() == 4 * 327680);
}

TEST_CASE("side embeddings receive gradient during training") {
  ArchitectureSpec spec = make_preset("MBR_R50-2G-LAI");
  spec.lai = LaiSpec{4, 2};
  spec.input_size = 64;
  spec.n_classes = 3;
  MbrModel<float> m(spec, Rng(11));
  Tensor4<float> x = random_images(4, 64, 37);
  std::vector<int> ids = {0, 0, 2, 2};
  std::vector<int> cams = {0, 1, 2, 3}, views = {0, 1, 0, 1};

  auto res = m.forward(x, cams, views, true);
  m.zero_grad();
  loss::Weights<float> w;
  std::vector<loss::UnitOutput<float>> units;
  for (size_t u = 0; u < res.units.size(); ++u)
    units.push_back({&res.units[u], res.logits[u].size() ? &res.logits[u] : nullptr, res.roles[u]});
  auto total = loss::lbs_total<float>(units, ids, w, true);
  UnitGrads<float> grads;
  grads.dunits = total.demb;
  grads.dlogits = total.dlogits;
  m.backward(x, grads);
  CHECK_FALSE(all_zero(m.lai_table().grad));
}

TEST_CASE("checkpoints are self-describing and round-trip exactly") {
  ArchitectureSpec spec = small_preset("MBR_R50-2G", 64, 6);
  MbrModel<float> m(spec, Rng(12));
  // move some state so the round trip is non-trivial
  Tensor4<float> x = random_images(4, 64, 41);
  (void)m.forward(x, {}, {}, true);

  io::NamedBlobs nb = snapshot_weights(m);
  nb.meta["epoch"] = 3;
  const std::string path = "/tmp/mbr_test_ckpt.bin";
  io::save_blobs(path, nb);
  io::NamedBlobs loaded = io::load_blobs(path);
  CHECK(loaded.meta.at("epoch") == 3);

  ArchitectureSpec rebuilt_spec = ArchitectureSpec::from_json(loaded.meta.at("spec"));
  MbrModel<float> rebuilt(rebuilt_spec, Rng(99));  // different random init
  restore_weights(rebuilt, loaded);

  RowMatX<float> a = m.forward_eval(x, {}, {});
  RowMatX<float> b = rebuilt.forward_eval(x, {}, {});
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0f);
  std::remove(path.c_str());

  // a mismatched architecture must refuse the weights
  MbrModel<float> wrong(small_preset("R50", 64, 6), Rng(1));
  CHECK_THROWS_AS(restore_weights(wrong, loaded), Error);
}

TEST_CASE("pretrained trunk loading slices grouped branches block-diagonally") {
  // source: full-width single-branch model snapshot
  MbrModel<float> source(small_preset("R50"), Rng(13));
  io::NamedBlobs nb = snapshot_weights(source);

  MbrModel<float> target(small_preset("MBR_R50-2G"), Rng(14));
  load_pretrained_backbone(target, nb);

  // trunk copied exactly
  nn::ParamRefs<float> srefs = source.params(), trefs = target.params();
  for (auto& tr : trefs) {
    if (tr.name.rfind("backbone", 0) != 0) continue;
    const std::vector<float>* sv = nb.find(tr.name);
    REQUIRE(sv != nullptr);
    for (Index i = 0; i < tr.param->size(); ++i) CHECK(tr.param->value[i] == (*sv)[size_t(i)]);
  }

  // block 0 conv1: group g of the target equals the source block
  // W[rows g*256:(g+1)*256, cols g*512:(g+1)*512]
  const auto& tconv = target.branches()[0].stage().blocks()[0].conv1();
  const std::vector<float>& sconv = *nb.find("branch0.stage.0.conv1.w");
  const Index icg = 512;
  for (Index o = 0; o < 512; ++o) {
    const Index grp = o / 256;
    for (Index c = 0; c < icg; c += 97)
      CHECK(tconv.weight().value[o * icg + c] == sconv[o * 1024 + grp * icg + c]);
  }

  // attention branches keep their random attention weights but inherit convs
  MbrModel<float> bot(small_preset("BoT"), Rng(15));
  std::vector<float> before(bot.branches()[0].stage().blocks()[0].attn()->query().weight().value.data(),
                            bot.branches()[0].stage().blocks()[0].attn()->query().weight().value.data() + 16);
  load_pretrained_backbone(bot, nb);
  const auto& qw = bot.branches()[0].stage().blocks()[0].attn()->query().weight().value;
  bool unchanged = true;
  for (int i = 0; i < 16; ++i)
    if (qw[i] != before[size_t(i)]) unchanged = false;
  CHECK(unchanged);
  // conv1 of the attention block is loaded from the source stage
  const auto& bconv = bot.branches()[0].stage().blocks()[0].conv1();
  CHECK(bconv.weight().value[0] == sconv[0]);
}

// Golden check against real pretrained weights. Runs only when
// MBR_PRETRAINED_WEIGHTS points at an R50-layout weight container with a
// "<container>.golden.json" sidecar holding {"gap_first5": [...]} recorded
// once from the loaded weights on the all-0.5 gray 256x256 image.
TEST_CASE("pretrained trunk reproduces recorded activations") {
  const char* env = std::getenv("MBR_PRETRAINED_WEIGHTS");
  if (!env) return;  // no weights available in this environment
  io::NamedBlobs nb = io::load_blobs(env);
  MbrModel<float> m(small_preset("R50", 256), Rng(0));
  load_pretrained_backbone(m, nb);

  Tensor4<float> x(1, 3, 256, 256);
  x.flat().setConstant(0.5f);
  Tensor4<float> fl3 = m.forward_shared_eval(x);
  RowMatX<float> gap;
  nn::global_avg_pool(fl3, gap);

  std::ifstream is(std::string(env) + ".golden.json");
  REQUIRE_MESSAGE(is.good(), "missing golden sidecar next to the weight container");
  nlohmann::json golden = nlohmann::json::parse(is);
  auto first5 = golden.at("gap_first5").get<std::vector<double>>();
  REQUIRE(first5.size() == 5);
  for (size_t c = 0; c < 5; ++c)
    CHECK(std::abs(double(gap(0, Index(c))) - first5[c]) < 1e-4);
}

TEST_CASE("model init is seed-deterministic") {
  MbrModel<float> a(small_preset("R50-2G"), Rng(77));
  MbrModel<float> b(small_preset("R50-2G"), Rng(77));
  MbrModel<float> c(small_preset("R50-2G"), Rng(78));
  auto pa = a.params(), pb = b.params(), pc = c.params();
  bool same = true, diff = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].param->value != pb[i].param->value) same = false;
    if (pa[i].param->value != pc[i].param->value) diff = true;
  }
  CHECK(same);
  CHECK(diff);
}

TEST_CASE("invalid architectures are rejected") {
  ArchitectureSpec spec = make_preset("R50");
  spec.stride_last_stage = 2;
  CHECK_THROWS_AS(spec.validate(), ValidationError);

  spec = make_preset("R50");
  spec.branches[0].groups = 3;  // does not divide 1024/2048 widths evenly
  spec.branches[0].roles = {loss::Role::Both, loss::Role::Both, loss::Role::Both};
  CHECK_THROWS_AS(spec.validate(), ValidationError);

  spec = make_preset("R50-LAI");
  spec.lai->n_cam = 0;  // side table without camera extent
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}
