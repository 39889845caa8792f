#include "lobdiff/training/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <spdlog/spdlog.h>

#include "lobdiff/diffusion/objective.hpp"
#include "lobdiff/network/score_network.hpp"
#include "../format_util.hpp"
#include "../json_util.hpp"

namespace lobdiff {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(ema_alpha > 0.0 && ema_alpha < 1.0)) throw ConfigError("ema_alpha must lie in (0, 1)");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(min_delta >= 0.0)) throw ConfigError("min_delta must be >= 0");
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw ConfigError("p_drop must lie in [0, 1]");
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be > 0");
  if (!std::isfinite(grad_clip)) throw ConfigError("grad_clip must be finite");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
                     {"ema_alpha", c.ema_alpha},         {"patience", c.patience},
                     {"min_delta", c.min_delta},         {"p_drop", c.p_drop},
                     {"max_epochs", c.max_epochs},       {"seed", c.seed},
                     {"conditional", c.conditional},     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},       {"adam_eps", c.adam_eps},
                     {"grad_clip", c.grad_clip}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  detail::JsonReader r(j, "train");
  r.get("learning_rate", c.learning_rate);
  r.get("batch_size", c.batch_size);
  r.get("ema_alpha", c.ema_alpha);
  r.get("patience", c.patience);
  r.get("min_delta", c.min_delta);
  r.get("p_drop", c.p_drop);
  r.get("max_epochs", c.max_epochs);
  r.get("seed", c.seed);
  r.get("conditional", c.conditional);
  r.get("adam_beta1", c.adam_beta1);
  r.get("adam_beta2", c.adam_beta2);
  r.get("adam_eps", c.adam_eps);
  r.get("grad_clip", c.grad_clip);
  r.finish();
}

EarlyStopping::EarlyStopping(double min_delta, int patience) : min_delta_(min_delta), patience_(patience) {
  if (min_delta < 0.0) throw ConfigError("min_delta must be >= 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
}

bool EarlyStopping::update(double val_loss) {
  // An improvement must beat the best value by strictly more than min_delta.
  improved_last_ = val_loss + min_delta_ < best_;
  if (improved_last_) {
    best_ = val_loss;
    since_ = 0;
  } else {
    ++since_;
  }
  return since_ >= patience_;
}

void ema_update(std::vector<double>& ema, const std::vector<double>& params, double alpha) {
  if (ema.size() != params.size()) throw ContractError("ema_update: parameter count mismatch");
  const double beta = 1.0 - alpha;
  for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = alpha * ema[i] + beta * params[i];
}

void ema_update(NetworkParameters& ema, const NetworkParameters& params, double alpha) {
  if (!(ema.config() == params.config())) throw ContractError("ema_update: network configs differ");
  ema_update(ema.values(), params.values(), alpha);
}

double adam_step(std::vector<double>& params, std::span<double> grad, AdamState& state, const TrainConfig& cfg) {
  const std::size_t n = params.size();
  if (grad.size() != n) throw ContractError("adam_step: gradient size mismatch");
  if (state.m.size() != n) state.m.assign(n, 0.0);
  if (state.v.size() != n) state.v.assign(n, 0.0);
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient");
  const double factor = (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;

  ++state.t;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i] * factor;
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    params[i] -= cfg.learning_rate * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.adam_eps);
  }
  return norm;
}

double validate(const NetworkParameters& params, std::span<const WindowSample> val_set, const NoiseSchedule& schedule,
                std::uint64_t seed) {
  if (val_set.empty()) throw ContractError("validate: validation set is empty");
  const auto examples = make_examples(val_set, params.config().liquidity_conditioned);
  Rng rng(derive_seed(seed, "validation"));
  const NetworkEpsModel model(params);
  return dsm_loss(model, examples, schedule, 0.0, rng);
}

TrainState init_train_state(const NetworkConfig& net_config, const TrainConfig& train_config,
                            const NoiseSchedule& schedule) {
  net_config.validate();
  train_config.validate();
  if (train_config.conditional != net_config.liquidity_conditioned) {
    throw ConfigError("train.conditional disagrees with network.liquidity_conditioned");
  }
  TrainState s;
  s.params = init_parameters(net_config, derive_seed(train_config.seed, "init"));
  s.ema_params = s.params;
  s.adam.m.assign(s.params.size(), 0.0);
  s.adam.v.assign(s.params.size(), 0.0);
  s.rng = Rng(derive_seed(train_config.seed, "train"));
  s.train_config = train_config;
  s.schedule = schedule;
  return s;
}

namespace {

double run_epoch(TrainState& s, const std::vector<TrainingExample>& examples, std::vector<std::size_t>& order) {
  const TrainConfig& cfg = s.train_config;
  std::shuffle(order.begin(), order.end(), s.rng.engine());
  const std::size_t per_example = static_cast<std::size_t>(s.params.config().window) *
                                  static_cast<std::size_t>(s.params.config().level_count);
  std::vector<double> grad(s.params.size());
  std::vector<TrainingExample> batch;
  double total = 0.0;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
    const auto draws = draw_dsm_batch(batch, s.schedule, cfg.p_drop, s.rng);
    std::fill(grad.begin(), grad.end(), 0.0);
    const double weight = 1.0 / static_cast<double>(draws.size() * per_example);
    double sse = 0.0;
    try {
      for (const auto& d : draws) sse += squared_error_gradient(s.params, d.noisy, d.step, d.ctx, d.eps, weight, grad);
      const double loss = sse * weight;
      if (!std::isfinite(loss)) throw NumericError("non-finite loss");
      adam_step(s.params.values(), grad, s.adam, cfg);
      if (!s.params.all_finite()) throw NumericError("non-finite parameters after the optimizer step");
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(s.epoch + 1) + " batch " + std::to_string(batch_index) + ": " +
                         e.what());
    }
    ema_update(s.ema_params, s.params, cfg.ema_alpha);
    total += sse;
  }
  return total / static_cast<double>(order.size() * per_example);
}

}  // namespace

void resume_training(TrainState& s, std::span<const WindowSample> train_set, std::span<const WindowSample> val_set,
                     const TrainHooks& hooks) {
  if (train_set.empty()) throw ContractError("train: training set is empty");
  if (val_set.empty()) throw ContractError("train: validation set is empty");
  const TrainConfig& cfg = s.train_config;
  const auto examples = make_examples(train_set, s.params.config().liquidity_conditioned);
  std::vector<std::size_t> order(examples.size());
  EarlyStopping stopper(cfg.min_delta, cfg.patience);
  stopper.restore(s.best_val_loss, s.epochs_since_improve);

  while (!s.stopped_early && s.epoch < cfg.max_epochs) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const double train_loss = run_epoch(s, examples, order);
    double val_loss = validate(s.params, val_set, s.schedule, cfg.seed);
    if (hooks.val_override) val_loss = hooks.val_override(s.epoch + 1, val_loss);
    if (!std::isfinite(val_loss)) throw NumericError("epoch " + std::to_string(s.epoch + 1) + ": non-finite val loss");
    ++s.epoch;
    s.stopped_early = stopper.update(val_loss);
    s.best_val_loss = stopper.best();
    s.epochs_since_improve = stopper.epochs_since_improve();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    s.history.push_back({s.epoch, train_loss, val_loss, cfg.learning_rate, secs});
    spdlog::info("epoch {} train {:.6f} val {:.6f}{} ({:.1f}s)", s.epoch, train_loss, val_loss,
                 stopper.improved_last() ? " *" : "", secs);
    if (hooks.on_epoch) hooks.on_epoch(s.history.back());
  }
  if (s.stopped_early) spdlog::info("early stop after epoch {} (best val {:.6f})", s.epoch, s.best_val_loss);
}

TrainState train(std::span<const WindowSample> train_set, std::span<const WindowSample> val_set,
                 const NetworkConfig& net_config, const TrainConfig& train_config, const NoiseSchedule& schedule,
                 const TrainHooks& hooks) {
  if (train_set.empty()) throw ContractError("train: training set is empty");
  if (val_set.empty()) throw ContractError("train: validation set is empty");
  TrainState s = init_train_state(net_config, train_config, schedule);
  resume_training(s, train_set, val_set, hooks);
  return s;
}

// Checkpoint layout: magic, u32 version, u64 header length, JSON header,
// u64 parameter count, then params, ema, adam m, adam v as raw doubles,
// and a trailing FNV-1a checksum over everything before it.
namespace {

constexpr char kMagic[8] = {'L', 'O', 'B', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& buf) : buf_(buf) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void doubles(std::vector<double>& out, std::size_t n) {
    need(n * sizeof(double));
    out.resize(n);
    std::memcpy(out.data(), buf_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated");
  }
  const std::string& buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const TrainState& s, const std::filesystem::path& path) {
  nlohmann::json h;
  h["network"] = s.params.config();
  h["train"] = s.train_config;
  h["schedule_betas"] = s.schedule.betas();
  h["epoch"] = s.epoch;
  h["best_val_loss"] = std::isfinite(s.best_val_loss) ? nlohmann::json(s.best_val_loss) : nlohmann::json(nullptr);
  h["epochs_since_improve"] = s.epochs_since_improve;
  h["stopped_early"] = s.stopped_early;
  h["adam_t"] = s.adam.t;
  h["rng_state"] = s.rng.serialize();
  // Wall-clock seconds stay out so identical runs give identical files.
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : s.history) {
    hist.push_back({{"epoch", r.epoch},
                    {"train_loss", r.train_loss},
                    {"val_loss", r.val_loss},
                    {"lr", r.learning_rate}});
  }
  h["history"] = hist;
  const std::string header = h.dump();

  const std::size_t n = s.params.size();
  if (s.ema_params.size() != n) throw ContractError("save_checkpoint: ema size mismatch");
  const std::vector<double>& p = s.params.values();
  const std::vector<double>& e = s.ema_params.values();
  std::vector<double> m = s.adam.m, v = s.adam.v;
  m.resize(n, 0.0);
  v.resize(n, 0.0);

  std::string buf(kMagic, sizeof(kMagic));
  put(buf, kVersion);
  put(buf, static_cast<std::uint64_t>(header.size()));
  buf += header;
  put(buf, static_cast<std::uint64_t>(n));
  const std::vector<double>* blobs[] = {&p, &e, &m, &v};
  for (const std::vector<double>* blob : blobs) {
    buf.append(reinterpret_cast<const char*>(blob->data()), n * sizeof(double));
  }
  put(buf, detail::fnv1a_bytes(buf.data(), buf.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < sizeof(kMagic) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint");
  }
  Reader r(buf);
  r.bytes(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kVersion) + ")");
  }
  const auto header_len = r.get<std::uint64_t>();
  if (header_len > buf.size()) throw CheckpointError("checkpoint is truncated");
  const std::string header = r.bytes(header_len);
  const auto n = r.get<std::uint64_t>();
  if (n > buf.size() / sizeof(double)) throw CheckpointError("checkpoint is truncated");

  TrainState s;
  std::vector<double> params, ema;
  r.doubles(params, n);
  r.doubles(ema, n);
  r.doubles(s.adam.m, n);
  r.doubles(s.adam.v, n);
  const std::size_t body = r.pos();
  const auto stored = r.get<std::uint64_t>();
  if (r.pos() != buf.size()) throw CheckpointError("trailing bytes after checkpoint data");
  if (stored != detail::fnv1a_bytes(buf.data(), body)) throw CheckpointError("checkpoint checksum mismatch");

  try {
    const nlohmann::json h = nlohmann::json::parse(header);
    const NetworkConfig net = h.at("network").get<NetworkConfig>();
    s.params = NetworkParameters(net);
    s.ema_params = NetworkParameters(net);
    if (s.params.size() != n) throw CheckpointError("parameter count does not match the stored network config");
    s.params.values() = std::move(params);
    s.ema_params.values() = std::move(ema);
    s.train_config = h.at("train").get<TrainConfig>();
    s.schedule = NoiseSchedule::from_betas(h.at("schedule_betas").get<std::vector<double>>());
    s.epoch = h.at("epoch").get<int>();
    const auto& best = h.at("best_val_loss");
    s.best_val_loss = best.is_null() ? std::numeric_limits<double>::infinity() : best.get<double>();
    s.epochs_since_improve = h.at("epochs_since_improve").get<int>();
    s.stopped_early = h.at("stopped_early").get<bool>();
    s.adam.t = h.at("adam_t").get<std::int64_t>();
    s.rng = Rng::deserialize(h.at("rng_state").get<std::string>());
    for (const auto& e : h.at("history")) {
      s.history.push_back({e.at("epoch").get<int>(), e.at("train_loss").get<double>(), e.at("val_loss").get<double>(),
                           e.at("lr").get<double>(), 0.0});
    }
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  return s;
}

TrainState load_checkpoint(const std::filesystem::path& path, const NetworkConfig& expected) {
  TrainState s = load_checkpoint(path);
  if (const auto field = first_difference(s.params.config(), expected)) {
    throw CheckpointError("checkpoint network config differs in field '" + *field + "'");
  }
  return s;
}

void write_training_log(const std::filesystem::path& path, std::span<const EpochRecord> history,
                        bool with_seconds) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,train_loss,val_loss,lr" << (with_seconds ? ",seconds" : "") << '\n';
  for (const auto& r : history) {
    out << r.epoch << ',' << detail::format_double(r.train_loss) << ',' << detail::format_double(r.val_loss) << ','
        << detail::format_double(r.learning_rate);
    if (with_seconds) out << ',' << detail::format_double(r.seconds);
    out << '\n';
  }
}

}  // namespace lobdiff
