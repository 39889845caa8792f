#include "lobdiff/forecast/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "lobdiff/rng.hpp"
#include "../json_util.hpp"

namespace lobdiff {

void GbdtConfig::validate() const {
  if (n_trees < 0) throw ConfigError("gbdt.n_trees must be >= 0");
  if (max_depth < 1) throw ConfigError("gbdt.max_depth must be >= 1");
  if (num_leaves < 2) throw ConfigError("gbdt.num_leaves must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("gbdt.learning_rate must be > 0");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw ConfigError("gbdt.subsample must lie in (0, 1]");
  if (min_samples_leaf < 1) throw ConfigError("gbdt.min_samples_leaf must be >= 1");
  if (max_bins < 2 || max_bins > 256) throw ConfigError("gbdt.max_bins must lie in [2, 256]");
}

void to_json(nlohmann::json& j, const GbdtConfig& c) {
  j = nlohmann::json{{"n_trees", c.n_trees},       {"max_depth", c.max_depth},
                     {"num_leaves", c.num_leaves}, {"learning_rate", c.learning_rate},
                     {"subsample", c.subsample},   {"min_samples_leaf", c.min_samples_leaf},
                     {"max_bins", c.max_bins},     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, GbdtConfig& c) {
  detail::JsonReader r(j, "gbdt");
  r.get("n_trees", c.n_trees);
  r.get("max_depth", c.max_depth);
  r.get("num_leaves", c.num_leaves);
  r.get("learning_rate", c.learning_rate);
  r.get("subsample", c.subsample);
  r.get("min_samples_leaf", c.min_samples_leaf);
  r.get("max_bins", c.max_bins);
  r.get("seed", c.seed);
  r.finish();
}

double GbdtModel::predict(std::span<const double> features) const {
  if (features.size() != feature_count_) {
    throw ContractError("gbdt predict: expected " + std::to_string(feature_count_) + " features, got " +
                        std::to_string(features.size()));
  }
  double out = base_score_;
  for (const auto& t : trees_) {
    int k = 0;
    while (t.feature[static_cast<std::size_t>(k)] >= 0) {
      const auto n = static_cast<std::size_t>(k);
      k = features[static_cast<std::size_t>(t.feature[n])] <= t.threshold[n] ? t.left[n] : t.right[n];
    }
    out += t.value[static_cast<std::size_t>(k)];
  }
  return out;
}

std::vector<double> GbdtModel::predict(const FeatureMatrix& x) const {
  std::vector<double> out(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) out[r] = predict(x.row(r));
  return out;
}

nlohmann::json GbdtModel::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) {
    trees.push_back({{"feature", t.feature},
                     {"threshold", t.threshold},
                     {"left", t.left},
                     {"right", t.right},
                     {"value", t.value}});
  }
  return {{"config", config_}, {"feature_count", feature_count_}, {"base_score", base_score_}, {"trees", trees}};
}

GbdtModel GbdtModel::from_json(const nlohmann::json& j) {
  GbdtModel m;
  try {
    m.config_ = j.at("config").get<GbdtConfig>();
    m.feature_count_ = j.at("feature_count").get<std::size_t>();
    m.base_score_ = j.at("base_score").get<double>();
    for (const auto& t : j.at("trees")) {
      Tree tree;
      tree.feature = t.at("feature").get<std::vector<int>>();
      tree.threshold = t.at("threshold").get<std::vector<double>>();
      tree.left = t.at("left").get<std::vector<int>>();
      tree.right = t.at("right").get<std::vector<int>>();
      tree.value = t.at("value").get<std::vector<double>>();
      const std::size_t n = tree.feature.size();
      if (n == 0 || tree.threshold.size() != n || tree.left.size() != n || tree.right.size() != n ||
          tree.value.size() != n) {
        throw Error("gbdt model: inconsistent tree arrays");
      }
      for (std::size_t k = 0; k < n; ++k) {
        if (tree.feature[k] < 0) continue;
        if (static_cast<std::size_t>(tree.feature[k]) >= m.feature_count_ || tree.left[k] <= static_cast<int>(k) ||
            tree.right[k] <= static_cast<int>(k) || static_cast<std::size_t>(tree.left[k]) >= n ||
            static_cast<std::size_t>(tree.right[k]) >= n) {
          throw Error("gbdt model: bad node " + std::to_string(k));
        }
      }
      m.trees_.push_back(std::move(tree));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("gbdt model: ") + e.what());
  }
  return m;
}

void GbdtModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json().dump() << '\n';
}

GbdtModel GbdtModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

namespace {

struct HistCell {
  double g = 0.0;
  double n = 0.0;
};

struct Binned {
  std::size_t rows = 0, cols = 0, bins = 0;
  std::vector<std::uint8_t> codes;         // rows x cols
  std::vector<std::vector<double>> edges;  // per feature, x <= edges[b] means code <= b
};

Binned bin_features(const FeatureMatrix& x, int max_bins) {
  Binned b;
  b.rows = x.rows;
  b.cols = x.cols;
  b.bins = static_cast<std::size_t>(max_bins);
  b.codes.resize(x.rows * x.cols);
  b.edges.resize(x.cols);
  std::vector<double> col(x.rows);
  for (std::size_t f = 0; f < x.cols; ++f) {
    for (std::size_t r = 0; r < x.rows; ++r) col[r] = x.values[r * x.cols + f];
    std::sort(col.begin(), col.end());
    auto& e = b.edges[f];
    const auto uend = std::unique(col.begin(), col.end());
    const auto distinct = static_cast<std::size_t>(uend - col.begin());
    if (distinct <= static_cast<std::size_t>(max_bins)) {
      for (std::size_t k = 0; k + 1 < distinct; ++k) e.push_back(0.5 * (col[k] + col[k + 1]));
    } else {
      // Quantiles of the distinct values keep bins populated on heavy ties too.
      for (int k = 1; k < max_bins; ++k) {
        const double v = col[static_cast<std::size_t>(k) * distinct / static_cast<std::size_t>(max_bins)];
        if (e.empty() || v > e.back()) e.push_back(v);
      }
    }
    for (std::size_t r = 0; r < x.rows; ++r) {
      const double v = x.values[r * x.cols + f];
      b.codes[r * x.cols + f] = static_cast<std::uint8_t>(std::lower_bound(e.begin(), e.end(), v) - e.begin());
    }
  }
  return b;
}

struct Split {
  int feature = -1;
  int bin = -1;
  double gain = 0.0;
};

struct Leaf {
  std::vector<std::uint32_t> rows;
  std::vector<HistCell> hist;  // cols x bins
  double g = 0.0;
  int depth = 0;
  int node = 0;
  Split best;
};

class TreeBuilder {
 public:
  TreeBuilder(const Binned& data, const std::vector<double>& grad, const GbdtConfig& cfg)
      : d_(data), grad_(grad), cfg_(cfg) {}

  void build_hist(Leaf& leaf) const {
    leaf.hist.assign(d_.cols * d_.bins, HistCell{});
    HistCell* h = leaf.hist.data();
    for (std::uint32_t r : leaf.rows) {
      const std::uint8_t* codes = d_.codes.data() + static_cast<std::size_t>(r) * d_.cols;
      const double g = grad_[r];
      for (std::size_t f = 0; f < d_.cols; ++f) {
        HistCell& c = h[f * d_.bins + codes[f]];
        c.g += g;
        c.n += 1.0;
      }
    }
  }

  void find_split(Leaf& leaf) const {
    leaf.best = Split{};
    if (leaf.depth >= cfg_.max_depth) return;
    const double n = static_cast<double>(leaf.rows.size());
    const double min_leaf = cfg_.min_samples_leaf;
    if (n < 2.0 * min_leaf) return;
    const double parent = leaf.g * leaf.g / n;
    for (std::size_t f = 0; f < d_.cols; ++f) {
      const std::size_t used = d_.edges[f].size() + 1;
      const HistCell* h = leaf.hist.data() + f * d_.bins;
      double gl = 0.0, nl = 0.0;
      for (std::size_t b = 0; b + 1 < used; ++b) {
        gl += h[b].g;
        nl += h[b].n;
        if (nl < min_leaf) continue;
        const double nr = n - nl;
        if (nr < min_leaf) break;
        const double gr = leaf.g - gl;
        const double gain = gl * gl / nl + gr * gr / nr - parent;
        if (gain > leaf.best.gain) leaf.best = {static_cast<int>(f), static_cast<int>(b), gain};
      }
    }
  }

  GbdtModel::Tree build(std::vector<std::uint32_t> rows) {
    GbdtModel::Tree tree;
    auto add_node = [&]() {
      tree.feature.push_back(-1);
      tree.threshold.push_back(0.0);
      tree.left.push_back(-1);
      tree.right.push_back(-1);
      tree.value.push_back(0.0);
      return static_cast<int>(tree.feature.size()) - 1;
    };
    std::vector<Leaf> leaves(1);
    leaves[0].rows = std::move(rows);
    leaves[0].node = add_node();
    for (std::uint32_t r : leaves[0].rows) leaves[0].g += grad_[r];
    build_hist(leaves[0]);
    find_split(leaves[0]);

    while (static_cast<int>(leaves.size()) < cfg_.num_leaves) {
      std::size_t pick = leaves.size();
      for (std::size_t k = 0; k < leaves.size(); ++k) {
        if (leaves[k].best.feature >= 0 && (pick == leaves.size() || leaves[k].best.gain > leaves[pick].best.gain)) {
          pick = k;
        }
      }
      if (pick == leaves.size()) break;
      Leaf parent = std::move(leaves[pick]);
      const auto f = static_cast<std::size_t>(parent.best.feature);
      const auto bin = static_cast<std::uint8_t>(parent.best.bin);
      Leaf l, r;
      for (std::uint32_t row : parent.rows) {
        (d_.codes[static_cast<std::size_t>(row) * d_.cols + f] <= bin ? l.rows : r.rows).push_back(row);
      }
      for (std::uint32_t row : l.rows) l.g += grad_[row];
      r.g = parent.g - l.g;
      l.depth = r.depth = parent.depth + 1;
      Leaf& small = l.rows.size() <= r.rows.size() ? l : r;
      Leaf& large = l.rows.size() <= r.rows.size() ? r : l;
      build_hist(small);
      large.hist = std::move(parent.hist);
      for (std::size_t k = 0; k < large.hist.size(); ++k) {
        large.hist[k].g -= small.hist[k].g;
        large.hist[k].n -= small.hist[k].n;
      }
      const auto node = static_cast<std::size_t>(parent.node);
      tree.feature[node] = static_cast<int>(f);
      tree.threshold[node] = d_.edges[f][bin];
      l.node = add_node();
      r.node = add_node();
      tree.left[node] = l.node;
      tree.right[node] = r.node;
      find_split(l);
      find_split(r);
      leaves[pick] = std::move(l);
      leaves.push_back(std::move(r));
    }
    for (const auto& leaf : leaves) {
      tree.value[static_cast<std::size_t>(leaf.node)] =
          leaf.rows.empty() ? 0.0 : -cfg_.learning_rate * leaf.g / static_cast<double>(leaf.rows.size());
    }
    return tree;
  }

 private:
  const Binned& d_;
  const std::vector<double>& grad_;
  const GbdtConfig& cfg_;
};

}  // namespace

GbdtModel train_gbdt(const FeatureMatrix& x, std::span<const double> y, const GbdtConfig& config) {
  config.validate();
  if (x.rows == 0 || x.cols == 0) throw ContractError("train_gbdt: empty feature matrix");
  if (y.size() != x.rows) throw ContractError("train_gbdt: target count differs from row count");
  if (x.values.size() != x.rows * x.cols) throw ContractError("train_gbdt: matrix storage has the wrong size");
  for (double v : x.values) {
    if (!std::isfinite(v)) throw ContractError("train_gbdt: non-finite feature");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw ContractError("train_gbdt: non-finite target");
  }

  GbdtModel model;
  model.config_ = config;
  model.feature_count_ = x.cols;
  model.base_score_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  if (*lo == *hi) {
    spdlog::warn("train_gbdt: target has zero variance, returning a constant model");
    model.base_score_ = *lo;
    return model;
  }

  const Binned data = bin_features(x, config.max_bins);
  std::vector<double> pred(x.rows, model.base_score_);
  std::vector<double> grad(x.rows);
  std::vector<std::uint32_t> all(x.rows);
  std::iota(all.begin(), all.end(), 0u);
  const auto n_sub = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.subsample * static_cast<double>(x.rows))));
  model.trees_.reserve(static_cast<std::size_t>(config.n_trees));

  for (int t = 0; t < config.n_trees; ++t) {
    for (std::size_t r = 0; r < x.rows; ++r) grad[r] = pred[r] - y[r];
    std::vector<std::uint32_t> rows;
    if (n_sub < x.rows) {
      Rng rng(derive_seed(config.seed, "gbdt_bag", static_cast<std::uint64_t>(t)));
      std::vector<std::uint32_t> perm = all;
      for (std::size_t k = 0; k < n_sub; ++k) {
        const auto j = static_cast<std::size_t>(
            rng.uniform_int(static_cast<std::int64_t>(k), static_cast<std::int64_t>(x.rows) - 1));
        std::swap(perm[k], perm[j]);
      }
      rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_sub));
      std::sort(rows.begin(), rows.end());
    } else {
      rows = all;
    }
    TreeBuilder builder(data, grad, config);
    GbdtModel::Tree tree = builder.build(std::move(rows));
    for (std::size_t r = 0; r < x.rows; ++r) {
      const std::uint8_t* codes = data.codes.data() + r * x.cols;
      int k = 0;
      while (tree.feature[static_cast<std::size_t>(k)] >= 0) {
        const auto n = static_cast<std::size_t>(k);
        const auto f = static_cast<std::size_t>(tree.feature[n]);
        // The threshold is an edge of this feature, so compare codes instead of values.
        const auto split_bin = static_cast<std::size_t>(
            std::lower_bound(data.edges[f].begin(), data.edges[f].end(), tree.threshold[n]) - data.edges[f].begin());
        k = codes[f] <= split_bin ? tree.left[n] : tree.right[n];
      }
      pred[r] += tree.value[static_cast<std::size_t>(k)];
    }
    model.trees_.push_back(std::move(tree));
  }
  return model;
}

}  // namespace lobdiff
