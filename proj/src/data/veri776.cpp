#include "mbr/data/manifest.hpp"

#include <algorithm>
#include <filesystem>

namespace fs = std::filesystem;

namespace mbr::data {

// File names carry the labels: <vehicle>_c<camera>_<frame>_<seq>.<ext>,
// e.g. "0123_c015_00027825_0.jpg". Vehicle ids keep their dataset numbering;
// camera ids are shifted to a 0-based range. No view metadata is encoded.
ImageRecord parse_veri776_name(const std::string& filename, const std::string& full_path) {
  const auto bad = [&]() -> ImageRecord {
    fail_validation("cannot parse labels from file name '", filename,
                    "' (expected <vid>_c<cam>_<frame>_<seq>): ", full_path);
  };
  const size_t u1 = filename.find('_');
  if (u1 == std::string::npos) return bad();
  const size_t u2 = filename.find('_', u1 + 1);
  if (u2 == std::string::npos || filename[u1 + 1] != 'c') return bad();

  ImageRecord r;
  try {
    r.vehicle_id = std::stoi(filename.substr(0, u1));
    r.camera_id = std::stoi(filename.substr(u1 + 2, u2 - u1 - 2)) - 1;
  } catch (const std::exception&) {
    return bad();
  }
  if (r.vehicle_id < 0 || r.camera_id < 0) return bad();
  const size_t dot = filename.rfind('.');
  r.image_id = filename.substr(0, dot);
  r.path = full_path;
  r.view_id = -1;
  return r;
}

DatasetManifest load_veri776_split(const std::string& dir, Split split) {
  if (!fs::is_directory(dir))
    fail_validation("missing split directory '", dir, "' for veri776 layout");
  DatasetManifest m;
  m.split = split;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".jpg" || ext == ".jpeg" || ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files)
    m.records.push_back(parse_veri776_name(p.filename().string(), p.string()));
  if (m.records.empty()) fail_validation("no records found in '", dir, "'");
  m.validate();
  return m;
}

}  // namespace mbr::data
