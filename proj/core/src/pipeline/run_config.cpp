#include "lobdiff/pipeline/run_config.hpp"

#include <fstream>

#include "lobdiff/rng.hpp"
#include "../json_util.hpp"

namespace lobdiff {

void DataConfig::validate() const {
  if (source != "synthetic" && source != "lobster" && source != "snapshots") {
    throw ConfigError("data.source must be synthetic, lobster or snapshots (got '" + source + "')");
  }
  if (source == "synthetic") {
    if (days < 1) throw ConfigError("data.days must be >= 1");
    if (n_seconds < 100) throw ConfigError("data.n_seconds must be >= 100");
  }
  if (source == "lobster") {
    if (orderbook_files.empty()) throw ConfigError("data.orderbook_files must list at least one file");
    if (!message_files.empty() && message_files.size() != orderbook_files.size()) {
      throw ConfigError("data.message_files must be empty or match data.orderbook_files");
    }
  }
  if (source == "snapshots" && snapshot_files.empty()) {
    throw ConfigError("data.snapshot_files must list at least one file");
  }
  for (const auto* list : {&orderbook_files, &message_files, &snapshot_files}) {
    for (const auto& f : *list) {
      if (!std::filesystem::exists(f)) throw ConfigError("data: input file does not exist: " + f);
    }
  }
  if (!(train_fraction > 0.0) || !(val_fraction > 0.0) || train_fraction + val_fraction >= 1.0) {
    throw ConfigError("data.train_fraction and data.val_fraction must be > 0 and sum below 1");
  }
  if (train_stride < 1 || val_stride < 1) throw ConfigError("data.train_stride and data.val_stride must be >= 1");
  if (!(clip_quantile > 0.0 && clip_quantile <= 1.0)) throw ConfigError("data.clip_quantile must lie in (0, 1]");
  if (!(scale_const > 0.0)) throw ConfigError("data.scale_const must be > 0");
}

NoiseSchedule ScheduleConfig::build() const {
  if (preset == "desk") return desk_schedule();
  if (preset == "default") return default_schedule();
  if (preset == "linear") {
    if (steps < 1) throw ConfigError("schedule.steps must be >= 1");
    return linear_schedule(steps, beta_first, beta_last);
  }
  throw ConfigError("schedule.preset must be desk, default or linear (got '" + preset + "')");
}

void RunConfig::validate() const {
  data.validate();
  network.validate();
  train_config().validate();
  (void)schedule.build();
  sampler_config().validate();
  if (generation.max_windows < 5) throw ConfigError("generation.max_windows must be >= 5");
  if (eval.max_lag < 1) throw ConfigError("eval.max_lag must be >= 1");
  if (downstream.horizons.empty()) throw ConfigError("downstream.horizons must not be empty");
  for (int h : downstream.horizons) {
    if (h < 1 || h > network.window) throw ConfigError("downstream.horizons entries must lie in [1, window]");
  }
  downstream.forecast.validate();
  if (downstream.forecast.history != network.window) {
    throw ConfigError("downstream.forecast.history must equal network.window");
  }
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seed = derive_seed(seed, "train");
  t.conditional = network.liquidity_conditioned;
  return t;
}

SamplerConfig RunConfig::sampler_config() const {
  SamplerConfig s = sampler;
  s.seed = derive_seed(seed, "sample");
  return s;
}

GbdtConfig RunConfig::gbdt_config() const {
  GbdtConfig g = downstream.forecast.gbdt;
  g.seed = derive_seed(seed, "forecast");
  return g;
}

std::uint64_t RunConfig::synth_seed() const { return derive_seed(seed, "synth"); }

namespace {

void reject_seed(const nlohmann::json& j, const std::string& where) {
  if (j.is_object() && j.contains("seed")) {
    throw ConfigError("unknown config key '" + where + ".seed' (module seeds derive from the top-level seed)");
  }
}

template <class T>
void read_module(detail::JsonReader& r, const char* key, T& out) {
  if (const auto* c = r.child(key)) c->get_to(out);
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  detail::JsonReader r(j, "");
  if (!j.contains("seed")) throw ConfigError("config key 'seed' is required");
  r.get("seed", c.seed);
  std::string out;
  if (r.get("out", out)) c.out = out;

  if (const auto* d = r.child("data")) {
    detail::JsonReader dr(*d, "data");
    dr.get("source", c.data.source);
    dr.get("days", c.data.days);
    dr.get("n_seconds", c.data.n_seconds);
    dr.get("orderbook_files", c.data.orderbook_files);
    dr.get("message_files", c.data.message_files);
    dr.get("snapshot_files", c.data.snapshot_files);
    dr.get("train_fraction", c.data.train_fraction);
    dr.get("val_fraction", c.data.val_fraction);
    dr.get("train_stride", c.data.train_stride);
    dr.get("val_stride", c.data.val_stride);
    dr.get("clip_quantile", c.data.clip_quantile);
    dr.get("scale_const", c.data.scale_const);
    dr.finish();
  }
  read_module(r, "network", c.network);
  if (const auto* t = r.child("train")) {
    reject_seed(*t, "train");
    t->get_to(c.train);
    if (t->contains("conditional") && c.train.conditional != c.network.liquidity_conditioned) {
      throw ConfigError("train.conditional disagrees with network.liquidity_conditioned");
    }
  }
  if (const auto* s = r.child("schedule")) {
    detail::JsonReader sr(*s, "schedule");
    sr.get("preset", c.schedule.preset);
    sr.get("steps", c.schedule.steps);
    sr.get("beta_first", c.schedule.beta_first);
    sr.get("beta_last", c.schedule.beta_last);
    sr.finish();
  }
  if (const auto* s = r.child("sampler")) {
    reject_seed(*s, "sampler");
    s->get_to(c.sampler);
  }
  if (const auto* g = r.child("generation")) {
    detail::JsonReader gr(*g, "generation");
    gr.get("max_windows", c.generation.max_windows);
    gr.finish();
  }
  if (const auto* e = r.child("eval")) {
    detail::JsonReader er(*e, "eval");
    er.get("max_lag", c.eval.max_lag);
    er.finish();
  }
  if (const auto* d = r.child("downstream")) {
    detail::JsonReader dr(*d, "downstream");
    dr.get("horizons", c.downstream.horizons);
    if (const auto* f = dr.child("forecast")) {
      if (f->is_object() && f->contains("gbdt")) reject_seed(f->at("gbdt"), "downstream.forecast.gbdt");
      f->get_to(c.downstream.forecast);
    }
    dr.finish();
  }
  r.finish();
  c.validate();
  return c;
}

nlohmann::json run_config_json(const RunConfig& c) {
  nlohmann::json train = c.train;
  train.erase("seed");
  train.erase("conditional");  // follows network.liquidity_conditioned
  nlohmann::json sampler = c.sampler;
  sampler.erase("seed");
  nlohmann::json forecast = c.downstream.forecast;
  forecast["gbdt"].erase("seed");
  return {{"seed", c.seed},
          {"out", c.out.string()},
          {"data",
           {{"source", c.data.source},
            {"days", c.data.days},
            {"n_seconds", c.data.n_seconds},
            {"orderbook_files", c.data.orderbook_files},
            {"message_files", c.data.message_files},
            {"snapshot_files", c.data.snapshot_files},
            {"train_fraction", c.data.train_fraction},
            {"val_fraction", c.data.val_fraction},
            {"train_stride", c.data.train_stride},
            {"val_stride", c.data.val_stride},
            {"clip_quantile", c.data.clip_quantile},
            {"scale_const", c.data.scale_const}}},
          {"network", c.network},
          {"train", train},
          {"schedule",
           {{"preset", c.schedule.preset},
            {"steps", c.schedule.steps},
            {"beta_first", c.schedule.beta_first},
            {"beta_last", c.schedule.beta_last}}},
          {"sampler", sampler},
          {"generation", {{"max_windows", c.generation.max_windows}}},
          {"eval", {{"max_lag", c.eval.max_lag}}},
          {"downstream", {{"horizons", c.downstream.horizons}, {"forecast", forecast}}}};
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override has an empty key segment: '" + key + "'");
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override path '" + key + "' goes through a non-object");
      *node = nlohmann::json::object();
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  // Input paths are relative to the config file.
  const auto base = path.parent_path();
  if (j.contains("data") && j["data"].is_object()) {
    for (const char* key : {"orderbook_files", "message_files", "snapshot_files"}) {
      auto it = j["data"].find(key);
      if (it == j["data"].end() || !it->is_array()) continue;
      for (auto& f : *it) {
        if (f.is_string() && std::filesystem::path(f.get<std::string>()).is_relative()) {
          f = (base / f.get<std::string>()).lexically_normal().string();
        }
      }
    }
  }
  return parse_run_config(j);
}

}  // namespace lobdiff
