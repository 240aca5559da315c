#include "mbr/data/manifest.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace mbr::data {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

DatasetManifest load_manifest_csv(const std::string& csv_path, Split split) {
  std::ifstream is(csv_path);
  if (!is) fail("cannot open manifest '", csv_path, "'");
  const fs::path base = fs::path(csv_path).parent_path();

  DatasetManifest m;
  m.split = split;
  std::string line;
  bool header = true;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cols = split_csv_line(line);
    if (header) {
      header = false;
      if (cols.size() >= 1 && cols[0] == "image_id") continue;  // header row optional
    }
    if (cols.size() != 5)
      fail_validation("manifest '", csv_path, "' line ", lineno, ": expected 5 columns, got ",
                      cols.size());
    ImageRecord r;
    r.image_id = cols[0];
    fs::path p = cols[1];
    r.path = p.is_absolute() ? p.string() : (base / p).string();
    try {
      r.vehicle_id = std::stoi(cols[2]);
      r.camera_id = std::stoi(cols[3]);
      r.view_id = cols[4].empty() ? -1 : std::stoi(cols[4]);
    } catch (const std::exception&) {
      fail_validation("manifest '", csv_path, "' line ", lineno, ": bad integer field");
    }
    m.records.push_back(std::move(r));
  }
  if (m.records.empty()) fail_validation("no records found in '", csv_path, "'");
  m.validate();
  return m;
}

void save_manifest_csv(const DatasetManifest& manifest, const std::string& csv_path) {
  std::ofstream os(csv_path, std::ios::trunc);
  if (!os) fail("cannot open '", csv_path, "' for writing");
  os << "image_id,path,vehicle_id,camera_id,view_id\n";
  const fs::path base = fs::path(csv_path).parent_path();
  for (const auto& r : manifest.records) {
    // store paths relative to the manifest when possible
    std::string p = r.path;
    std::error_code ec;
    fs::path rel = fs::relative(r.path, base, ec);
    if (!ec && !rel.empty() && rel.native()[0] != '.') p = rel.string();
    os << r.image_id << ',' << p << ',' << r.vehicle_id << ',' << r.camera_id << ',';
    if (r.has_view()) os << r.view_id;
    os << '\n';
  }
  if (!os) fail("short write to '", csv_path, "'");
}

DatasetTriplet load_dataset(const std::string& root, const std::string& layout) {
  if (!fs::is_directory(root)) fail_validation("dataset root '", root, "' is not a directory");
  DatasetTriplet t;
  if (layout == "csv") {
    for (auto [split, name] : {std::pair{Split::Train, "train"}, {Split::Query, "query"},
                               {Split::Gallery, "gallery"}}) {
      const fs::path csv = fs::path(root) / (std::string(name) + ".csv");
      if (!fs::exists(csv))
        fail_validation("missing split manifest '", csv.string(), "' in csv layout");
      DatasetManifest m = load_manifest_csv(csv.string(), split);
      (split == Split::Train ? t.train : split == Split::Query ? t.query : t.gallery) =
          std::move(m);
    }
    return t;
  }
  if (layout == "veri776") {
    const fs::path r(root);
    t.train = load_veri776_split((r / "image_train").string(), Split::Train);
    t.query = load_veri776_split((r / "image_query").string(), Split::Query);
    t.gallery = load_veri776_split((r / "image_test").string(), Split::Gallery);
    return t;
  }
  fail_validation("unknown dataset layout '", layout, "' (expected 'csv' or 'veri776')");
}

}  // namespace mbr::data
