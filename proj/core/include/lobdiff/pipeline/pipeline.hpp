#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lobdiff/data/normalization.hpp"
#include "lobdiff/data/snapshot.hpp"
#include "lobdiff/data/windows.hpp"
#include "lobdiff/eval/metrics.hpp"
#include "lobdiff/pipeline/run_config.hpp"

namespace lobdiff {

/// Runtime failure inside a pipeline stage; the message names the stage.
class StageError : public Error {
 public:
  using Error::Error;
};

const std::vector<std::string>& pipeline_commands();

/// Row ranges of one day: train [0, train_end), val [train_end, val_end),
/// test [val_end, n).
struct DaySplit {
  std::string day;
  std::size_t n = 0, train_end = 0, val_end = 0;
};

struct PreparedData {
  std::vector<SnapshotSeries> days;
  std::vector<DaySplit> splits;
  NormalizationSpec spec;
};

/// Training-region windows the generator is run on, with the raw real
/// future block for each (rows anchor_index-L+1..anchor_index of its day).
struct GenerationInputs {
  std::vector<WindowSample> windows;
  std::vector<Window> real_futures;
  std::vector<std::size_t> day_of;  // index into PreparedData::days
};

std::vector<DaySplit> chronological_splits(std::span<const SnapshotSeries> days, double train_fraction,
                                           double val_fraction);
/// Rows [first, last) of a series as a new series with the same day name.
SnapshotSeries slice(const SnapshotSeries& s, std::size_t first, std::size_t last);
/// Windows inside rows [first, last) with anchor_index relative to the full series.
std::vector<WindowSample> windows_in(const SnapshotSeries& s, std::size_t first, std::size_t last,
                                     const NormalizationSpec& spec, int length, int stride);

/// Reads the artifacts of earlier stages under config.out.
PreparedData load_prepared(const RunConfig& config);
GenerationInputs generation_inputs(const RunConfig& config, const PreparedData& data);

/// The commands. Each writes under config.out/<command>/ with a manifest.json.
void run_synth_data(const RunConfig& config);
void run_preprocess(const RunConfig& config);
void run_train(const RunConfig& config);
void run_sample(const RunConfig& config);
void run_counterfactual(const RunConfig& config);
void run_evaluate(const RunConfig& config);
void run_downstream(const RunConfig& config);
void run_report(const RunConfig& config);

/// Dispatch by name; unknown names are a ConfigError.
void run_command(const std::string& command, const RunConfig& config);

std::string file_hash(const std::filesystem::path& path);

}  // namespace lobdiff
