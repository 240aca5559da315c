#pragma once

#include <map>
#include <vector>

#include "mbr/core/rng.hpp"
#include "mbr/data/manifest.hpp"

namespace mbr::data {

struct PKBatchSpec {
  Index p = 6;  // identities per batch
  Index k = 8;  // samples per identity
  std::uint64_t seed = 0;

  void validate() const {
    if (p < 2 || k < 2)
      fail_validation("PK sampling needs P >= 2 and K >= 2 (got P=", p, ", K=", k,
                      "): batch-hard mining requires a positive and a negative per anchor");
  }
};

// Identity-balanced batch sampler. An epoch is the shortest batch sequence in
// which every identity appears at least once: ceil(#ids / P) batches of P
// distinct identities with K records each. Identities with fewer than K
// images repeat (shuffled, cycled). Fully deterministic in (manifest order,
// spec, seed, epoch).
class PKSampler {
 public:
  PKSampler(const DatasetManifest& train, const PKBatchSpec& spec) : spec_(spec) {
    spec_.validate();
    MBR_CHECK(train.split == Split::Train, "PK sampling is defined on the train split");
    std::map<int, std::vector<Index>> by_id;
    for (size_t i = 0; i < train.records.size(); ++i)
      by_id[train.records[i].vehicle_id].push_back(Index(i));
    for (auto& [id, idxs] : by_id) groups_.push_back(std::move(idxs));
    if (Index(groups_.size()) < spec_.p)
      fail_validation("PK sampling needs at least P=", spec_.p, " identities, dataset has ",
                      groups_.size());
  }

  Index identity_count() const { return Index(groups_.size()); }
  Index batch_size() const { return spec_.p * spec_.k; }
  Index batches_per_epoch() const {
    return (identity_count() + spec_.p - 1) / spec_.p;
  }

  // all batches of one epoch, in consumption order
  std::vector<std::vector<Index>> epoch_batches(Index epoch) const {
    Rng root(spec_.seed);
    Rng order_rng = root.fork(0x5151ull * std::uint64_t(epoch) + 1);

    std::vector<Index> ids(groups_.size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = Index(i);
    order_rng.shuffle(ids);

    const Index n_batches = batches_per_epoch();
    std::vector<std::vector<Index>> batches;
    for (Index b = 0; b < n_batches; ++b) {
      std::vector<Index> chosen;
      for (Index j = b * spec_.p; j < (b + 1) * spec_.p; ++j)
        chosen.push_back(ids[size_t(j % Index(ids.size()))]);
      // the wrap above can repeat ids in the final short batch: replace
      // duplicates with unused ids so each batch holds P distinct identities
      std::vector<char> used(ids.size(), 0);
      for (size_t j = 0; j < chosen.size(); ++j) {
        if (!used[size_t(chosen[j])]) {
          used[size_t(chosen[j])] = 1;
          continue;
        }
        for (Index cand : ids)
          if (!used[size_t(cand)]) {
            chosen[j] = cand;
            used[size_t(cand)] = 1;
            break;
          }
      }

      std::vector<Index> batch;
      batch.reserve(size_t(batch_size()));
      for (Index id : chosen) {
        std::vector<Index> pool = groups_[size_t(id)];
        Rng pick = root.fork(0x9e37ull * std::uint64_t(epoch) + 0x85ebull * std::uint64_t(id) + 7);
        pick.shuffle(pool);
        for (Index s = 0; s < spec_.k; ++s)
          batch.push_back(pool[size_t(s % Index(pool.size()))]);
      }
      batches.push_back(std::move(batch));
    }
    return batches;
  }

  const PKBatchSpec& spec() const { return spec_; }

 private:
  PKBatchSpec spec_;
  std::vector<std::vector<Index>> groups_;  // record indices per identity
};

}  // namespace mbr::data
