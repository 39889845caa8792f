#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lobdiff/common.hpp"
#include "lobdiff/data/orderbook.hpp"

namespace lobdiff {

struct VolumeSnapshot {
  int time_of_day = 0;  // integer seconds after midnight
  LevelVector volumes{};
};

/// One trading day sampled at 1 Hz inside the retained session.
struct SnapshotSeries {
  std::string day;
  std::vector<VolumeSnapshot> snapshots;

  std::size_t size() const { return snapshots.size(); }
  bool empty() const { return snapshots.empty(); }
  const VolumeSnapshot& operator[](std::size_t i) const { return snapshots[i]; }

  /// True when rows [first, last] are exactly one second apart.
  bool contiguous(std::size_t first, std::size_t last) const;
};

/// Size columns in canonical level order [Ask10..Ask1, Bid1..Bid10].
LevelVector volumes_from_event(const RawBookEvent& event);

/// Samples the book once per integer second t of [10:00:00, 15:30:00): the
/// snapshot labelled t is the last state with time < t + 1, i.e. the book at
/// the close of that second. Seconds before the first event are omitted.
SnapshotSeries sample_series(std::span<const RawBookEvent> events, std::string day);

/// Columnar text file: header `time,ask10,...,ask1,bid1,...,bid10`, one row per second.
void write_snapshot_file(const SnapshotSeries& series, const std::filesystem::path& path);
SnapshotSeries read_snapshot_file(const std::filesystem::path& path, std::string day);

/// Column names in canonical level order.
const std::array<std::string, kLevels>& level_names();

}  // namespace lobdiff
