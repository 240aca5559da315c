#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "mbr/audit/audit.hpp"

using namespace mbr;
using namespace mbr::audit;

namespace {

model::ArchitectureSpec sized(const std::string& name, Index input) {
  auto spec = model::make_preset(name);
  spec.input_size = input;
  return spec;
}

}  // namespace

TEST_CASE("baseline trunk+stage counts match the reference model exactly") {
  model::MbrModel<float> m(sized("R50", 256), Rng(0));
  ModelStats stats = walk(m);
  // headless ResNet50 with a stride-1 last stage
  CHECK(stats.params(false) == 23508032);
  CHECK(stats.params(false) == stats.params_enumerated(false));
  CHECK(stats.macs(false) == 8106541056LL);
}

TEST_CASE("analytic equals enumerated on every preset") {
  for (const auto& name : model::preset_names()) {
    model::MbrModel<float> m(sized(name, 64), Rng(0));  // size-independent params
    ModelStats stats = walk(m);
    CHECK_MESSAGE(stats.params(false) == stats.params_enumerated(false), name);
    CHECK_MESSAGE(stats.params(true) == stats.params_enumerated(true), name);
  }
}

TEST_CASE("grouped stage conv parameters scale exactly by 1/G") {
  auto stage_conv_params = [](const std::string& name) {
    model::MbrModel<float> m(sized(name, 64), Rng(0));
    ModelStats stats = walk(m);
    long long total = 0;
    for (const auto& l : stats.layers)
      if (l.name.rfind("branch", 0) == 0 && l.name.find("conv") != std::string::npos)
        total += l.params;
    return total;
  };
  const long long full = stage_conv_params("R50");
  CHECK(stage_conv_params("R50-2G") * 2 == full);
  CHECK(stage_conv_params("R50-4G") * 4 == full);
}

TEST_CASE("loss-branch-split twins audit identically") {
  const char* pairs[][2] = {{"R50-2B", "MBR_R50-2B"},   {"R50-2G", "MBR_R50-2G"},
                            {"R50-4G", "MBR_R50-4G"},   {"R50-2x2G", "MBR_R50-2x2G"},
                            {"Hybrid-4B", "MBR-4B"},    {"Hybrid-4G", "MBR-4G"},
                            {"Hybrid-2x2G", "MBR-2x2G"}};
  for (auto& p : pairs) {
    model::MbrModel<float> a(sized(p[0], 64), Rng(0));
    model::MbrModel<float> b(sized(p[1], 64), Rng(0));
    CHECK_MESSAGE(walk(a).params(false) == walk(b).params(false), p[0]);
  }
}

TEST_CASE("attention stage is smaller than the convolutional stage") {
  model::MbrModel<float> r50(sized("R50", 256), Rng(0));
  model::MbrModel<float> bot(sized("BoT", 256), Rng(0));
  auto branch_params = [](model::MbrModel<float>& m) {
    long long total = 0;
    for (const auto& l : walk(m).layers)
      if (l.name.rfind("branch", 0) == 0) total += l.params;
    return total;
  };
  CHECK(branch_params(bot) < branch_params(r50));
}

TEST_CASE("doubling input width quadruples the stem cost of a conv model") {
  model::MbrModel<float> a(sized("R50", 256), Rng(0));
  model::MbrModel<float> b(sized("R50", 512), Rng(0));
  auto stem_macs = [](model::MbrModel<float>& m) {
    for (const auto& l : walk(m).layers)
      if (l.name == "backbone.stem.conv") return l.macs;
    return 0LL;
  };
  CHECK(stem_macs(b) == 4 * stem_macs(a));
}

TEST_CASE("full scope adds exactly the heads and the side table") {
  auto spec = sized("MBR_R50-2G-LAI", 64);
  spec.n_classes = 100;
  model::MbrModel<float> m(spec, Rng(0));
  ModelStats stats = walk(m);
  const long long head_params = 2 * 1024 + 1024 * 100;  // one cls head: neck + fc
  const long long lai_params = 2048LL * 20 * 8;
  CHECK(stats.params(true) - stats.params(false) == head_params + lai_params);
}

TEST_CASE("deliberate mis-grouping fails the parameter audit") {
  // a G=2 model audited against the G=4 reference row must fail
  model::MbrModel<float> m(sized("R50-2G", 256), Rng(0));
  const double measured_m = double(walk(m).params(false)) / 1e6;
  const ExpectedRow* wrong = find_expected("R50-4G");
  REQUIRE(wrong != nullptr);
  const double dev = std::abs(measured_m - wrong->params_m) / wrong->params_m;
  CHECK(dev > kParamsTolerance);
}

TEST_CASE("audit report fields and json") {
  AuditReport report = audit_presets({"R50", "BoT"});
  REQUIRE(report.rows.size() == 2);
  for (const auto& r : report.rows) {
    CHECK(r.params_pass);
    CHECK(r.flops_pass);
    CHECK(r.dims_pass);
  }
  auto j = report.to_json();
  CHECK(j.size() == 2);
  CHECK(j[0].at("preset") == "R50");
  CHECK(report.table().find("R50") != std::string::npos);
}
