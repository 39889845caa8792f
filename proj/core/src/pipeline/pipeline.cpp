#include "lobdiff/pipeline/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "lobdiff/data/orderbook.hpp"
#include "lobdiff/data/synth_market.hpp"
#include "lobdiff/eval/stats.hpp"
#include "lobdiff/forecast/forecast.hpp"
#include "lobdiff/sampling/sampler.hpp"
#include "lobdiff/training/trainer.hpp"
#include "../format_util.hpp"

#ifndef LOBDIFF_VERSION
#define LOBDIFF_VERSION "unknown"
#endif

namespace lobdiff {

namespace fs = std::filesystem;

const std::vector<std::string>& pipeline_commands() {
  static const std::vector<std::string> names{"synth-data", "preprocess",  "train",      "sample",
                                              "counterfactual", "evaluate", "downstream", "report"};
  return names;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h = detail::fnv1a_bytes(buf.data(), static_cast<std::size_t>(in.gcount()), h);
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

namespace {

fs::path stage_dir(const RunConfig& c, const std::string& stage) { return c.out / stage; }
fs::path data_dir(const RunConfig& c) { return c.out / "data"; }
fs::path checkpoint_path(const RunConfig& c) { return stage_dir(c, "train") / "checkpoint.bin"; }
fs::path generated_path(const RunConfig& c, ScenarioKind kind) {
  return stage_dir(c, kind == ScenarioKind::kFactual ? "sample" : "counterfactual") / (to_string(kind) + ".csv");
}

void require_file(const fs::path& p, const std::string& stage, const std::string& producer) {
  if (!fs::exists(p)) throw StageError(stage + ": missing " + p.string() + " (run '" + producer + "' first)");
}

std::string relative_to_out(const RunConfig& c, const fs::path& p) {
  const auto rel = p.lexically_relative(c.out);
  return rel.empty() || rel.native().rfind("..", 0) == 0 ? p.string() : rel.generic_string();
}

// Manifest beside every stage's outputs: enough to rerun it and check the result.
void write_manifest(const RunConfig& c, const std::string& command, const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs, nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json in = nlohmann::json::object(), out = nlohmann::json::object();
  for (const auto& p : inputs) in[relative_to_out(c, p)] = file_hash(p);
  for (const auto& p : outputs) out[relative_to_out(c, p)] = file_hash(p);
  nlohmann::json m{{"command", command},     {"tool_version", LOBDIFF_VERSION}, {"seed", c.seed},
                   {"config", run_config_json(c)}, {"inputs", in},             {"outputs", out}};
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  const fs::path dir = command == "synth-data" ? data_dir(c) : stage_dir(c, command);
  std::ofstream f(dir / "manifest.json", std::ios::trunc);
  if (!f) throw Error("cannot write manifest in " + dir.string());
  f << m.dump(2) << '\n';
}

std::vector<fs::path> day_files(const RunConfig& c, const PreparedData& d) {
  std::vector<fs::path> files;
  for (const auto& s : d.days) files.push_back(data_dir(c) / (s.day + ".csv"));
  return files;
}

TrainState load_model(const RunConfig& c, const std::string& stage) {
  require_file(checkpoint_path(c), stage, "train");
  return load_checkpoint(checkpoint_path(c), c.network);
}

GeneratedSet load_set(const RunConfig& c, ScenarioKind kind, const std::string& stage) {
  const auto p = generated_path(c, kind);
  require_file(p, stage, kind == ScenarioKind::kFactual ? "sample" : "counterfactual");
  return read_generated_set(p);
}

std::vector<double> window_totals(std::span<const Window> windows) {
  std::vector<double> t;
  t.reserve(windows.size());
  for (const auto& w : windows) t.push_back(w.sum());
  return t;
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

}  // namespace

std::vector<DaySplit> chronological_splits(std::span<const SnapshotSeries> days, double train_fraction,
                                           double val_fraction) {
  std::vector<DaySplit> out;
  for (const auto& s : days) {
    DaySplit d;
    d.day = s.day;
    d.n = s.snapshots.size();
    d.train_end = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(d.n)));
    d.val_end = d.train_end + static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(d.n)));
    out.push_back(d);
  }
  return out;
}

SnapshotSeries slice(const SnapshotSeries& s, std::size_t first, std::size_t last) {
  if (first > last || last > s.snapshots.size()) throw ContractError("slice: bad row range");
  SnapshotSeries out;
  out.day = s.day;
  out.snapshots.assign(s.snapshots.begin() + static_cast<std::ptrdiff_t>(first),
                       s.snapshots.begin() + static_cast<std::ptrdiff_t>(last));
  return out;
}

std::vector<WindowSample> windows_in(const SnapshotSeries& s, std::size_t first, std::size_t last,
                                     const NormalizationSpec& spec, int length, int stride) {
  auto w = build_windows(slice(s, first, last), spec, length, stride);
  for (auto& x : w) x.anchor_index += first;
  return w;
}

PreparedData load_prepared(const RunConfig& c) {
  const fs::path dir = stage_dir(c, "preprocess");
  require_file(dir / "splits.json", "load", "preprocess");
  require_file(dir / "normalization.json", "load", "preprocess");
  PreparedData d;
  d.spec = read_normalization(dir / "normalization.json");
  std::ifstream in(dir / "splits.json");
  const auto j = nlohmann::json::parse(in);
  for (const auto& e : j.at("days")) {
    DaySplit s;
    s.day = e.at("day").get<std::string>();
    s.n = e.at("n").get<std::size_t>();
    s.train_end = e.at("train_end").get<std::size_t>();
    s.val_end = e.at("val_end").get<std::size_t>();
    const fs::path file = data_dir(c) / (s.day + ".csv");
    require_file(file, "load", "preprocess");
    d.days.push_back(read_snapshot_file(file, s.day));
    if (d.days.back().snapshots.size() != s.n) throw StageError("load: " + file.string() + " changed since preprocess");
    d.splits.push_back(s);
  }
  return d;
}

GenerationInputs generation_inputs(const RunConfig& c, const PreparedData& d) {
  std::vector<WindowSample> all;
  std::vector<std::size_t> all_day;
  for (std::size_t k = 0; k < d.days.size(); ++k) {
    auto w = windows_in(d.days[k], 0, d.splits[k].train_end, d.spec, c.network.window, 1);
    for (auto& x : w) {
      all.push_back(std::move(x));
      all_day.push_back(k);
    }
  }
  if (all.empty()) throw StageError("generation: no training-region windows");
  const std::size_t want = std::min(all.size(), static_cast<std::size_t>(c.generation.max_windows));
  GenerationInputs g;
  const auto L = static_cast<std::size_t>(c.network.window);
  for (std::size_t i = 0; i < want; ++i) {
    const std::size_t k = i * all.size() / want;
    const auto& series = d.days[all_day[k]];
    Window real(static_cast<Eigen::Index>(L), kLevels);
    for (std::size_t r = 0; r < L; ++r) {
      const auto& v = series.snapshots[all[k].anchor_index + 1 - L + r].volumes;
      for (int j = 0; j < kLevels; ++j) real(static_cast<Eigen::Index>(r), j) = v[static_cast<std::size_t>(j)];
    }
    g.windows.push_back(all[k]);
    g.real_futures.push_back(std::move(real));
    g.day_of.push_back(all_day[k]);
  }
  return g;
}

void run_synth_data(const RunConfig& c) {
  if (c.data.source != "synthetic") throw ConfigError("synth-data needs data.source = synthetic");
  fs::create_directories(data_dir(c));
  std::vector<fs::path> outputs;
  for (int d = 0; d < c.data.days; ++d) {
    auto cfg = SynthMarketConfig::desk(c.synth_seed(), "day" + std::to_string(d));
    if (cfg.n_seconds != c.data.n_seconds) {
      cfg.n_seconds = c.data.n_seconds;
      cfg.calibrate_long_memory(0.5);
    }
    const auto series = synth_market(cfg);
    outputs.push_back(data_dir(c) / (series.day + ".csv"));
    write_snapshot_file(series, outputs.back());
    spdlog::info("synth-data: {} with {} snapshots", series.day, series.snapshots.size());
  }
  write_manifest(c, "synth-data", {}, outputs, {{"market", "desk"}, {"designed_gamma", 0.5}});
}

void run_preprocess(const RunConfig& c) {
  std::vector<SnapshotSeries> days;
  std::vector<fs::path> inputs;
  fs::create_directories(data_dir(c));
  if (c.data.source == "synthetic") {
    for (int d = 0; d < c.data.days; ++d) {
      const std::string day = "day" + std::to_string(d);
      const fs::path f = data_dir(c) / (day + ".csv");
      require_file(f, "preprocess", "synth-data");
      days.push_back(read_snapshot_file(f, day));
      inputs.push_back(f);
    }
  } else if (c.data.source == "lobster") {
    for (std::size_t k = 0; k < c.data.orderbook_files.size(); ++k) {
      const fs::path book = c.data.orderbook_files[k];
      const std::string day = book.stem().string();
      ParseResult parsed = c.data.message_files.empty()
                               ? parse_orderbook(book)
                               : parse_orderbook(book, fs::path(c.data.message_files[k]));
      spdlog::info("preprocess: {} rows read, {} skipped (missing), {} skipped (invalid)", parsed.rows_read,
                   parsed.skipped_missing, parsed.skipped_invalid);
      days.push_back(sample_series(parsed.events, day));
      inputs.push_back(book);
      if (!c.data.message_files.empty()) inputs.emplace_back(c.data.message_files[k]);
      write_snapshot_file(days.back(), data_dir(c) / (day + ".csv"));
    }
  } else {
    for (const auto& f : c.data.snapshot_files) {
      const std::string day = fs::path(f).stem().string();
      days.push_back(read_snapshot_file(f, day));
      inputs.emplace_back(f);
      if (fs::absolute(f) != fs::absolute(data_dir(c) / (day + ".csv"))) {
        write_snapshot_file(days.back(), data_dir(c) / (day + ".csv"));
      }
    }
  }
  const auto splits = chronological_splits(days, c.data.train_fraction, c.data.val_fraction);
  std::vector<SnapshotSeries> train_parts;
  for (std::size_t k = 0; k < days.size(); ++k) train_parts.push_back(slice(days[k], 0, splits[k].train_end));
  const auto spec = fit_normalization(train_parts, c.data.clip_quantile, c.data.scale_const);

  const fs::path dir = stage_dir(c, "preprocess");
  fs::create_directories(dir);
  write_normalization(spec, dir / "normalization.json");
  nlohmann::json sj;
  sj["days"] = nlohmann::json::array();
  std::size_t bad = 0, windows = 0;
  for (std::size_t k = 0; k < days.size(); ++k) {
    const auto& s = splits[k];
    sj["days"].push_back({{"day", s.day}, {"n", s.n}, {"train_end", s.train_end}, {"val_end", s.val_end}});
    for (const auto& w : windows_in(days[k], 0, s.train_end, spec, c.network.window, c.data.train_stride)) {
      ++windows;
      if (!lambda_consistent(w, spec)) ++bad;
    }
  }
  if (bad > 0) throw StageError("preprocess: " + std::to_string(bad) + " windows fail the liquidity consistency check");
  std::ofstream(dir / "splits.json") << sj.dump(2) << '\n';
  write_manifest(c, "preprocess", inputs, {dir / "normalization.json", dir / "splits.json"},
                 {{"training_windows", windows}});
  spdlog::info("preprocess: {} day(s), {} training windows", days.size(), windows);
}

void run_train(const RunConfig& c) {
  const PreparedData d = load_prepared(c);
  std::vector<WindowSample> train_set, val_set;
  for (std::size_t k = 0; k < d.days.size(); ++k) {
    const auto& s = d.splits[k];
    auto tr = windows_in(d.days[k], 0, s.train_end, d.spec, c.network.window, c.data.train_stride);
    auto va = windows_in(d.days[k], s.train_end, s.val_end, d.spec, c.network.window, c.data.val_stride);
    train_set.insert(train_set.end(), tr.begin(), tr.end());
    val_set.insert(val_set.end(), va.begin(), va.end());
  }
  spdlog::info("train: {} training and {} validation windows", train_set.size(), val_set.size());
  const TrainState state = train(train_set, val_set, c.network, c.train_config(), c.schedule.build());
  const fs::path dir = stage_dir(c, "train");
  fs::create_directories(dir);
  save_checkpoint(state, checkpoint_path(c));
  write_training_log(dir / "training_log.csv", state.history, false);
  // Wall-clock timings vary run to run, so they live in their own file.
  write_training_log(dir / "timings.csv", state.history, true);
  const auto inputs = day_files(c, d);
  std::vector<fs::path> in = inputs;
  in.push_back(stage_dir(c, "preprocess") / "normalization.json");
  write_manifest(c, "train", in, {checkpoint_path(c), dir / "training_log.csv"},
                 {{"epochs", state.epoch},
                  {"stopped_early", state.stopped_early},
                  {"best_val_loss", state.best_val_loss},
                  {"checkpoint_hash", file_hash(checkpoint_path(c))}});
}

namespace {

void generate_and_write(const RunConfig& c, ScenarioKind kind, const std::string& stage) {
  const PreparedData d = load_prepared(c);
  const TrainState model = load_model(c, stage);
  const GenerationInputs inputs = generation_inputs(c, d);
  const ScenarioSpec spec = kind == ScenarioKind::kFactual         ? ScenarioSpec::factual()
                            : kind == ScenarioKind::kOverLiquidity ? ScenarioSpec::over_liquidity()
                                                                   : ScenarioSpec::under_liquidity();
  const GeneratedSet set =
      generate_dataset(inputs.windows, spec, model.ema_params, model.schedule, d.spec, c.sampler_config());
  fs::create_directories(stage_dir(c, stage));
  write_generated_set(set, generated_path(c, kind));
}

}  // namespace

void run_sample(const RunConfig& c) {
  generate_and_write(c, ScenarioKind::kFactual, "sample");
  write_manifest(c, "sample", {checkpoint_path(c)}, {generated_path(c, ScenarioKind::kFactual)},
                 {{"omega", c.sampler.omega}, {"checkpoint_hash", file_hash(checkpoint_path(c))}});
}

void run_counterfactual(const RunConfig& c) {
  if (!c.network.liquidity_conditioned) {
    throw ConfigError("counterfactual needs network.liquidity_conditioned = true");
  }
  const std::string stage = "counterfactual";
  generate_and_write(c, ScenarioKind::kOverLiquidity, stage);
  generate_and_write(c, ScenarioKind::kUnderLiquidity, stage);

  const PreparedData d = load_prepared(c);
  const GenerationInputs inputs = generation_inputs(c, d);
  const auto factual = generated_windows(load_set(c, ScenarioKind::kFactual, stage));
  const auto over = generated_windows(load_set(c, ScenarioKind::kOverLiquidity, stage));
  const auto under = generated_windows(load_set(c, ScenarioKind::kUnderLiquidity, stage));
  std::vector<double> means;
  for (const auto& w : inputs.windows) means.push_back(w.mean_lambda());
  const QuintileBins bins = quintile_bins(means);
  const CounterfactualGrid grid = counterfactual_grid(inputs.real_futures, bins, factual, over, under);

  const fs::path dir = stage_dir(c, stage);
  write_counterfactual_grid(grid, dir / "grid.csv");
  nlohmann::json gj{{"rows", grid.row_names}, {"cells", grid.cells}};
  std::vector<double> bin_index;
  for (std::size_t b = 1; b <= bins.members.size(); ++b) bin_index.push_back(static_cast<double>(b));
  gj["spearman_ol_row"] = spearman(bin_index, grid.cells[2]);
  gj["spearman_ul_row"] = spearman(bin_index, grid.cells[3]);
  std::ofstream(dir / "grid.json") << gj.dump(2) << '\n';

  const auto tf = window_totals(factual), to = window_totals(over), tu = window_totals(under);
  const auto ul_vs_f = welch_t_test(tf, tu);  // H1: factual > UL
  const auto ol_vs_f = welch_t_test(to, tf);  // H1: OL > factual
  nlohmann::json sj{{"n_windows", factual.size()},
                    {"mean_total", {{"under_liquidity", mean_of(tu)}, {"factual", mean_of(tf)}, {"over_liquidity", mean_of(to)}}},
                    {"p_factual_gt_under", ul_vs_f.p_greater},
                    {"p_over_gt_factual", ol_vs_f.p_greater}};
  std::ofstream(dir / "scenario_summary.json") << sj.dump(2) << '\n';
  write_manifest(c, stage, {checkpoint_path(c), generated_path(c, ScenarioKind::kFactual)},
                 {generated_path(c, ScenarioKind::kOverLiquidity), generated_path(c, ScenarioKind::kUnderLiquidity),
                  dir / "grid.csv", dir / "grid.json", dir / "scenario_summary.json"},
                 {{"omega", c.sampler.omega}, {"checkpoint_hash", file_hash(checkpoint_path(c))}});
}

void run_evaluate(const RunConfig& c) {
  const std::string stage = "evaluate";
  const PreparedData d = load_prepared(c);
  const GenerationInputs inputs = generation_inputs(c, d);
  const auto fake = generated_windows(load_set(c, ScenarioKind::kFactual, stage));
  std::vector<Window> real_series;
  for (std::size_t k = 0; k < d.days.size(); ++k) {
    real_series.push_back(series_matrix(slice(d.days[k], 0, d.splits[k].train_end)));
  }
  const MetricsReport report = compute_metrics(inputs.real_futures, fake, real_series, c.eval.max_lag);
  const fs::path dir = stage_dir(c, stage);
  fs::create_directories(dir);
  write_metrics(report, dir);

  double total = 0.0;
  std::size_t cells = 0;
  for (const auto& w : inputs.real_futures) {
    total += w.sum();
    cells += static_cast<std::size_t>(w.size());
  }
  const double mean_real = total / static_cast<double>(cells);
  const nlohmann::json realism{{"mean_real_volume", mean_real},
                               {"mean_wasserstein", report.marginals.mean_wasserstein},
                               {"wasserstein_over_mean_volume", report.marginals.mean_wasserstein / mean_real}};
  std::ofstream(dir / "realism.json") << realism.dump(2) << '\n';
  std::vector<fs::path> outputs;
  for (const char* f : {"marginals.csv", "avg_volume.csv", "cross_corr_real.csv", "cross_corr_fake.csv",
                        "diff_corr_real.csv", "diff_corr_fake.csv", "acf_real.csv", "acf_fake.csv", "powerlaw.csv",
                        "metrics.json", "realism.json"}) {
    outputs.push_back(dir / f);
  }
  write_manifest(c, stage, {generated_path(c, ScenarioKind::kFactual)}, outputs);
  spdlog::info("evaluate: mean W1 {:.3f} = {:.3f} x mean real volume", report.marginals.mean_wasserstein,
               report.marginals.mean_wasserstein / mean_real);
}

void run_downstream(const RunConfig& c) {
  const std::string stage = "downstream";
  const PreparedData d = load_prepared(c);
  const GenerationInputs inputs = generation_inputs(c, d);
  std::vector<GeneratedSet> sets;
  std::vector<fs::path> in;
  for (auto kind : {ScenarioKind::kFactual, ScenarioKind::kOverLiquidity, ScenarioKind::kUnderLiquidity}) {
    const auto p = generated_path(c, kind);
    if (!fs::exists(p)) {
      spdlog::warn("downstream: {} not found, augmenting without it", p.string());
      continue;
    }
    sets.push_back(read_generated_set(p));
    in.push_back(p);
    if (sets.back().windows.size() != inputs.windows.size()) {
      throw StageError("downstream: " + p.string() + " does not match the generation windows");
    }
  }

  ForecastConfig fc = c.downstream.forecast;
  fc.gbdt = c.gbdt_config();
  std::vector<ForecastReport> reports;
  for (int h : c.downstream.horizons) {
    fc.horizon = h;
    std::vector<ForecastSample> real_train, test, synthetic;
    for (std::size_t k = 0; k < d.days.size(); ++k) {
      const auto& s = d.splits[k];
      auto tr = build_targets(slice(d.days[k], 0, s.train_end), fc.history, h, fc.anchor_stride);
      real_train.insert(real_train.end(), tr.begin(), tr.end());
      auto te = build_targets(slice(d.days[k], s.val_end, s.n), fc.history, h, 1);
      for (auto& x : te) x.anchor += s.val_end;
      test.insert(test.end(), te.begin(), te.end());
    }
    for (const auto& set : sets) {
      // Generated windows follow the generation inputs, so each one's day is known.
      for (std::size_t k = 0; k < d.days.size(); ++k) {
        GeneratedSet part;
        for (std::size_t i = 0; i < set.windows.size(); ++i) {
          if (inputs.day_of[i] == k) part.windows.push_back(set.windows[i]);
        }
        auto s = synthetic_samples(d.days[k], part, fc.history, h);
        synthetic.insert(synthetic.end(), s.begin(), s.end());
      }
    }
    reports.push_back(compare_arms(real_train, synthetic, test, fc));
    spdlog::info("downstream H={}: MSE {:.4g} -> {:.4g} ({:+.2f}%)", h, reports.back().real.mse,
                 reports.back().augmented.mse, reports.back().mse_improvement);
  }
  const fs::path dir = stage_dir(c, stage);
  fs::create_directories(dir);
  write_forecast_reports(reports, dir / "forecast.csv", dir / "forecast.json");
  write_manifest(c, stage, in, {dir / "forecast.csv", dir / "forecast.json"});
}

void run_report(const RunConfig& c) {
  const std::string stage = "report";
  const fs::path dir = stage_dir(c, stage);
  fs::create_directories(dir);
  std::vector<fs::path> in, out;
  auto read_json = [&](const fs::path& p, const std::string& producer) {
    require_file(p, stage, producer);
    in.push_back(p);
    std::ifstream f(p);
    return nlohmann::json::parse(f);
  };
  using detail::format_double;
  {
    const auto m = read_json(stage_dir(c, "evaluate") / "metrics.json", "evaluate");
    std::ofstream t(dir / "table1_realism.csv");
    t << "metric,value\n";
    t << "wasserstein," << format_double(m.at("marginals").at("mean_wasserstein").get<double>()) << '\n';
    t << "kl," << format_double(m.at("marginals").at("mean_kl").get<double>()) << '\n';
    t << "ks," << format_double(m.at("marginals").at("mean_ks").get<double>()) << '\n';
    out.push_back(dir / "table1_realism.csv");
  }
  {
    const auto g = read_json(stage_dir(c, "counterfactual") / "grid.json", "counterfactual");
    std::ofstream t(dir / "table2_counterfactual.csv");
    const auto& cells = g.at("cells");
    t << "row";
    for (std::size_t b = 0; b < cells.at(0).size(); ++b) t << ",bin_" << b + 1;
    t << '\n';
    for (std::size_t r = 0; r < cells.size(); ++r) {
      t << g.at("rows").at(r).get<std::string>();
      for (const auto& v : cells.at(r)) t << ',' << format_double(v.get<double>());
      t << '\n';
    }
    out.push_back(dir / "table2_counterfactual.csv");
  }
  {
    const auto f = read_json(stage_dir(c, "downstream") / "forecast.json", "downstream");
    std::ofstream t(dir / "table3_forecast.csv");
    t << "horizon,dataset,mse,mae,r2\n";
    for (const auto& r : f) {
      const int h = r.at("horizon").get<int>();
      for (const auto& [name, key] : {std::pair{"Real", "real"}, std::pair{"Real+Synthetic", "augmented"}}) {
        const auto& a = r.at(key);
        t << h << ',' << name << ',' << format_double(a.at("mse").get<double>()) << ','
          << format_double(a.at("mae").get<double>()) << ',' << format_double(a.at("r2").get<double>()) << '\n';
      }
      const auto& imp = r.at("improvement_pct");
      t << h << ",Improvement%," << format_double(imp.at("mse").get<double>()) << ','
        << format_double(imp.at("mae").get<double>()) << ',' << format_double(imp.at("r2").get<double>()) << '\n';
    }
    out.push_back(dir / "table3_forecast.csv");
  }
  write_manifest(c, stage, in, out);
}

void run_command(const std::string& command, const RunConfig& config) {
  if (command == "synth-data") return run_synth_data(config);
  if (command == "preprocess") return run_preprocess(config);
  if (command == "train") return run_train(config);
  if (command == "sample") return run_sample(config);
  if (command == "counterfactual") return run_counterfactual(config);
  if (command == "evaluate") return run_evaluate(config);
  if (command == "downstream") return run_downstream(config);
  if (command == "report") return run_report(config);
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace lobdiff
