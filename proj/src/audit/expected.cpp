#include "mbr/audit/audit.hpp"

namespace mbr::audit {

// Published reference sizes for the architecture family: millions of
// parameters (trunk + branch stages, classifier heads excluded), giga
// multiply-accumulates at 256x256x3, per-group input slice of the shared map
// and final descriptor length. The loss-branch-split twins share their base
// architecture's row, since loss routing adds no audited weights.
const std::vector<ExpectedRow>& expected_counts() {
  static const std::vector<ExpectedRow> rows = {
      {"R50", 23.5, 8.1, 1024, 2048},
      {"BoT", 18.8, 7.2, 1024, 2048},
      {"R50-2G", 16.0, 6.2, 512, 2048},
      {"R50-4G", 12.0, 5.3, 256, 2048},
      {"R50-2x2G", 23.5, 8.1, 512, 4096},
      {"R50-2B", 38.5, 11.9, 1024, 4096},
      {"R50-4B", 69.6, 19.6, 1024, 8192},
      {"MBR_R50-2G", 16.0, 6.2, 512, 2048},
      {"MBR_R50-4G", 12.0, 5.3, 256, 2048},
      {"MBR_R50-2x2G", 23.5, 8.1, 512, 4096},
      {"MBR_R50-2B", 38.5, 11.9, 1024, 4096},
      {"MBR_R50-4B", 69.6, 19.6, 1024, 8192},
      {"Hybrid-4G", 11.7, 5.2, 256, 2048},
      {"MBR-4G", 11.7, 5.2, 256, 2048},
      {"Hybrid-2x2G", 18.8, 7.9, 512, 4096},
      {"MBR-2x2G", 18.8, 7.9, 512, 4096},
      {"Hybrid-4B", 59.1, 17.8, 1024, 8192},
      {"MBR-4B", 59.1, 17.8, 1024, 8192},
  };
  return rows;
}

const ExpectedRow* find_expected(const std::string& preset) {
  for (const auto& r : expected_counts())
    if (r.preset == preset) return &r;
  return nullptr;
}

AuditRow audit_preset(const std::string& preset) {
  const ExpectedRow* exp = find_expected(preset);
  if (!exp) fail_validation("no published reference counts for preset '", preset, "'");

  model::ArchitectureSpec spec = model::make_preset(preset);
  model::MbrModel<float> m(spec, Rng(0));
  ModelStats stats = walk(m);
  MBR_CHECK(stats.params(false) == stats.params_enumerated(false),
            "analytic/enumerated parameter counts disagree for ", preset);

  AuditRow row;
  row.preset = preset;
  row.measured_params_m = double(stats.params(false)) / 1e6;
  row.expected_params_m = exp->params_m;
  row.params_dev = std::abs(row.measured_params_m - row.expected_params_m) / row.expected_params_m;
  row.params_pass = row.params_dev <= kParamsTolerance;

  row.measured_flops_g = double(stats.macs(false)) / 1e9;
  row.expected_flops_g = exp->flops_g;
  row.flops_dev = std::abs(row.measured_flops_g - row.expected_flops_g) / row.expected_flops_g;
  row.flops_pass = row.flops_dev <= kFlopsTolerance;

  Index slice = -1;
  bool uniform = true;
  for (const auto& b : spec.branches) {
    const Index s = b.in_width() / b.groups;
    if (slice < 0) slice = s;
    else if (slice != s) uniform = false;
  }
  row.measured_slice = uniform ? slice : -1;
  row.expected_slice = exp->dim_slice;
  row.measured_fg = spec.global_dim();
  row.expected_fg = exp->dim_fg;
  row.dims_pass = row.measured_slice == row.expected_slice && row.measured_fg == row.expected_fg;
  return row;
}

AuditReport audit_presets(const std::vector<std::string>& presets) {
  AuditReport report;
  for (const auto& p : presets) report.rows.push_back(audit_preset(p));
  return report;
}

nlohmann::json AuditReport::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"preset", r.preset},
                 {"measured_params_m", r.measured_params_m},
                 {"expected_params_m", r.expected_params_m},
                 {"params_rel_dev", r.params_dev},
                 {"params_pass", r.params_pass},
                 {"measured_flops_g", r.measured_flops_g},
                 {"expected_flops_g", r.expected_flops_g},
                 {"flops_rel_dev", r.flops_dev},
                 {"flops_pass", r.flops_pass},
                 {"measured_dim_slice", r.measured_slice},
                 {"expected_dim_slice", r.expected_slice},
                 {"measured_dim_fg", r.measured_fg},
                 {"expected_dim_fg", r.expected_fg},
                 {"dims_pass", r.dims_pass},
                 {"pass", r.pass()}});
  }
  return j;
}

std::string AuditReport::table() const {
  std::ostringstream os;
  os << std::left << std::setw(14) << "preset" << std::right << std::setw(10) << "params[M]"
     << std::setw(10) << "ref[M]" << std::setw(8) << "dev%" << std::setw(10) << "flops[G]"
     << std::setw(9) << "ref[G]" << std::setw(8) << "dev%" << std::setw(7) << "slice"
     << std::setw(6) << "f_g" << std::setw(7) << "ok" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(14) << r.preset << std::right << std::fixed
       << std::setprecision(2) << std::setw(10) << r.measured_params_m << std::setw(10)
       << r.expected_params_m << std::setw(7) << std::setprecision(2) << (r.params_dev * 100)
       << (r.params_pass ? " " : "!") << std::setw(10) << r.measured_flops_g << std::setw(9)
       << r.expected_flops_g << std::setw(7) << (r.flops_dev * 100)
       << (r.flops_pass ? " " : "!") << std::setw(7) << r.measured_slice << std::setw(6)
       << r.measured_fg << std::setw(7) << (r.pass() ? "pass" : "FAIL") << '\n';
  }
  return os.str();
}

}  // namespace mbr::audit
