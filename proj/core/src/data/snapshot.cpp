#include "lobdiff/data/snapshot.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "format_util.hpp"

namespace lobdiff {

bool SnapshotSeries::contiguous(std::size_t first, std::size_t last) const {
  if (last >= snapshots.size() || first > last) return false;
  return snapshots[last].time_of_day - snapshots[first].time_of_day ==
         static_cast<int>(last - first);
}

LevelVector volumes_from_event(const RawBookEvent& event) {
  LevelVector v{};
  for (int k = 0; k < kBookDepth; ++k) {
    v[kBookDepth - 1 - k] = event.ask_size[k];
    v[kBookDepth + k] = event.bid_size[k];
  }
  return v;
}

SnapshotSeries sample_series(std::span<const RawBookEvent> events, std::string day) {
  SnapshotSeries series;
  series.day = std::move(day);
  std::size_t next = 0;
  const RawBookEvent* current = nullptr;
  for (int t = kSessionStart; t < kSessionEnd; ++t) {
    while (next < events.size() && events[next].time_of_day < static_cast<double>(t + 1)) {
      current = &events[next];
      ++next;
    }
    if (current == nullptr) continue;
    series.snapshots.push_back({t, volumes_from_event(*current)});
  }
  if (series.empty()) spdlog::warn("sample_series: no book state inside the session for day '{}'", series.day);
  return series;
}

const std::array<std::string, kLevels>& level_names() {
  static const std::array<std::string, kLevels> names = [] {
    std::array<std::string, kLevels> n;
    for (int k = 0; k < kBookDepth; ++k) {
      n[kBookDepth - 1 - k] = "ask" + std::to_string(k + 1);
      n[kBookDepth + k] = "bid" + std::to_string(k + 1);
    }
    return n;
  }();
  return names;
}

void write_snapshot_file(const SnapshotSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "time";
  for (const auto& name : level_names()) out << ',' << name;
  out << '\n';
  for (const auto& s : series.snapshots) {
    out << s.time_of_day;
    for (double v : s.volumes) out << ',' << detail::format_double(v);
    out << '\n';
  }
}

SnapshotSeries read_snapshot_file(const std::filesystem::path& path, std::string day) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  SnapshotSeries series;
  series.day = std::move(day);
  std::string line;
  std::size_t row = 0;
  if (!std::getline(in, line)) return series;  // header
  ++row;
  int last_time = -1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    VolumeSnapshot snap;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col == 0) {
        snap.time_of_day = std::stoi(cell);
      } else if (col <= kLevels) {
        double v = 0.0;
        const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || !std::isfinite(v) || v < 0.0) {
          throw ParseError("bad volume '" + cell + "'", row);
        }
        snap.volumes[col - 1] = v;
      }
      ++col;
    }
    if (col != kLevels + 1) throw ParseError("expected 21 columns", row);
    if (snap.time_of_day <= last_time) throw ParseError("timestamps not strictly increasing", row);
    last_time = snap.time_of_day;
    series.snapshots.push_back(snap);
  }
  return series;
}

}  // namespace lobdiff
