#pragma once

#include <map>
#include <string>
#include <vector>

#include "mbr/core/common.hpp"

namespace mbr::data {

// One labeled image. view_id is -1 when the dataset carries no view
// orientation metadata (camera-only datasets are legal).
struct ImageRecord {
  std::string image_id;
  std::string path;
  int vehicle_id = 0;
  int camera_id = 0;
  int view_id = -1;

  bool has_view() const { return view_id >= 0; }
};

enum class Split { Train, Query, Gallery };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Query: return "query";
    case Split::Gallery: return "gallery";
  }
  return "?";
}

struct DatasetManifest {
  Split split = Split::Train;
  std::vector<ImageRecord> records;

  Index n_classes() const {
    std::map<int, int> ids;
    for (const auto& r : records) ids[r.vehicle_id] = 1;
    return Index(ids.size());
  }

  // stable vehicle_id -> [0, C) mapping (ascending id order), one per record
  std::vector<int> compact_labels() const {
    std::map<int, int> ids;
    for (const auto& r : records) ids.emplace(r.vehicle_id, 0);
    int next = 0;
    for (auto& [id, cls] : ids) cls = next++;
    std::vector<int> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(ids.at(r.vehicle_id));
    return out;
  }

  void validate() const {
    std::map<std::string, int> seen;
    for (const auto& r : records) {
      if (r.vehicle_id < 0) fail_validation("negative vehicle id for '", r.image_id, "'");
      if (r.camera_id < 0) fail_validation("negative camera id for '", r.image_id, "'");
      if (++seen[r.image_id] > 1) fail_validation("duplicate image id '", r.image_id, "'");
    }
  }
};

struct DatasetTriplet {
  DatasetManifest train, query, gallery;
};

// CSV columns: image_id,path,vehicle_id,camera_id,view_id (view empty when
// absent). Relative paths resolve against the CSV's directory.
DatasetManifest load_manifest_csv(const std::string& csv_path, Split split);
void save_manifest_csv(const DatasetManifest& manifest, const std::string& csv_path);

// layout "csv": root/{train,query,gallery}.csv
// layout "veri776": root/{image_train,image_query,image_test}/ with labels
// encoded in the file names
DatasetTriplet load_dataset(const std::string& root, const std::string& layout);

// veri776-style file name, e.g. "0001_c001_00016450_0.jpg"
ImageRecord parse_veri776_name(const std::string& filename, const std::string& full_path);
DatasetManifest load_veri776_split(const std::string& dir, Split split);

}  // namespace mbr::data
