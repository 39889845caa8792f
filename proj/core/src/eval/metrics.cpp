#include "lobdiff/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "../format_util.hpp"

namespace lobdiff {

LevelPools pool_levels(std::span<const Window> windows) {
  LevelPools pools(kLevels);
  for (const auto& w : windows) {
    if (w.cols() != kLevels) throw ContractError("pool_levels: windows must have 20 columns");
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (int d = 0; d < kLevels; ++d) pools[static_cast<std::size_t>(d)].push_back(w(r, d));
    }
  }
  return pools;
}

LevelPools pool_levels(const SnapshotSeries& series) {
  const Window m = series_matrix(series);
  return pool_levels(std::span(&m, 1));
}

Window series_matrix(const SnapshotSeries& series) {
  Window m(static_cast<Eigen::Index>(series.snapshots.size()), kLevels);
  for (std::size_t t = 0; t < series.snapshots.size(); ++t) {
    for (int d = 0; d < kLevels; ++d) {
      m(static_cast<Eigen::Index>(t), d) = series.snapshots[t].volumes[static_cast<std::size_t>(d)];
    }
  }
  return m;
}

std::vector<Window> generated_windows(const GeneratedSet& set) {
  std::vector<Window> out;
  out.reserve(set.windows.size());
  for (const auto& g : set.windows) out.push_back(g.volumes);
  return out;
}

namespace {

std::vector<double> sorted(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return s;
}

void require_nonempty(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.empty() || b.empty()) throw ContractError(std::string(what) + ": empty sample");
}

// Walks the merged support calling f(x, next_x, F(x), G(x)) after all ties at x.
template <class F>
void walk_ecdfs(const std::vector<double>& a, const std::vector<double>& b, F&& f) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    double x;
    if (j == b.size() || (i < a.size() && a[i] <= b[j])) {
      x = a[i];
    } else {
      x = b[j];
    }
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    double next = x;
    if (i < a.size() && j < b.size()) {
      next = std::min(a[i], b[j]);
    } else if (i < a.size()) {
      next = a[i];
    } else if (j < b.size()) {
      next = b[j];
    }
    f(x, next, static_cast<double>(i) / na, static_cast<double>(j) / nb);
  }
}

}  // namespace

double wasserstein1(std::span<const double> a, std::span<const double> b) {
  require_nonempty(a, b, "wasserstein1");
  const auto sa = sorted(a);
  const auto sb = sorted(b);
  double total = 0.0;
  walk_ecdfs(sa, sb, [&](double x, double next, double F, double G) { total += std::abs(F - G) * (next - x); });
  return total;
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  require_nonempty(a, b, "ks_statistic");
  const auto sa = sorted(a);
  const auto sb = sorted(b);
  double best = 0.0;
  walk_ecdfs(sa, sb, [&](double, double, double F, double G) { best = std::max(best, std::abs(F - G)); });
  return best;
}

double kl_divergence(std::span<const double> real, std::span<const double> fake, int bins, double smoothing) {
  require_nonempty(real, fake, "kl_divergence");
  if (bins < 1) throw ConfigError("kl_divergence: bins must be >= 1");
  const auto [rmin, rmax] = std::minmax_element(real.begin(), real.end());
  const auto [fmin, fmax] = std::minmax_element(fake.begin(), fake.end());
  const double lo = std::min(*rmin, *fmin);
  const double hi = std::max(*rmax, *fmax);
  if (!(hi > lo)) return 0.0;
  const double width = (hi - lo) / bins;
  auto hist = [&](std::span<const double> v) {
    std::vector<double> h(static_cast<std::size_t>(bins), 0.0);
    for (double x : v) {
      const int k = std::min(static_cast<int>((x - lo) / width), bins - 1);
      h[static_cast<std::size_t>(k)] += 1.0;
    }
    double sum = 0.0;
    for (double& c : h) {
      c = c / static_cast<double>(v.size()) + smoothing;
      sum += c;
    }
    for (double& c : h) c /= sum;
    return h;
  };
  const auto p = hist(real);
  const auto q = hist(fake);
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) kl += p[k] * std::log(p[k] / q[k]);
  return std::max(kl, 0.0);
}

MarginalDistances marginal_distances(const LevelPools& real, const LevelPools& fake, std::size_t min_samples) {
  if (real.size() != fake.size() || real.empty()) throw ContractError("marginal_distances: level counts differ");
  MarginalDistances out;
  const std::size_t D = real.size();
  for (std::size_t d = 0; d < D; ++d) {
    for (const auto* side : {&real, &fake}) {
      const auto& pool = (*side)[d];
      const char* name = side == &real ? "real" : "fake";
      if (pool.empty()) throw ContractError("marginal_distances: level " + std::to_string(d) + " (" + name + ") is empty");
      if (pool.size() < min_samples) {
        throw ContractError("marginal_distances: level " + std::to_string(d) + " (" + name + ") has " +
                            std::to_string(pool.size()) + " samples, need " + std::to_string(min_samples));
      }
    }
    out.wasserstein.push_back(wasserstein1(real[d], fake[d]));
    out.kl.push_back(kl_divergence(real[d], fake[d]));
    out.ks.push_back(ks_statistic(real[d], fake[d]));
  }
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  out.mean_wasserstein = mean(out.wasserstein);
  out.mean_kl = mean(out.kl);
  out.mean_ks = mean(out.ks);
  return out;
}

Eigen::VectorXd avg_volume_per_level(const Window& series) {
  if (series.rows() == 0) throw ContractError("avg_volume_per_level: empty series");
  return series.colwise().mean().transpose();
}

Eigen::VectorXd avg_volume_per_level(std::span<const Window> windows) {
  if (windows.empty()) throw ContractError("avg_volume_per_level: no windows");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(windows.front().cols());
  Eigen::Index rows = 0;
  for (const auto& w : windows) {
    sum += w.colwise().sum().transpose();
    rows += w.rows();
  }
  if (rows == 0) throw ContractError("avg_volume_per_level: empty windows");
  return sum / static_cast<double>(rows);
}

namespace {

Eigen::MatrixXd pearson_matrix(const Window& x, const char* what) {
  if (x.rows() < 2) throw ContractError(std::string(what) + ": need at least 2 rows, got " + std::to_string(x.rows()));
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered;
  const Eigen::Index D = cov.rows();
  Eigen::MatrixXd c(D, D);
  for (Eigen::Index i = 0; i < D; ++i) {
    if (cov(i, i) <= 0.0) spdlog::warn("{}: level {} has zero variance", what, i);
    for (Eigen::Index j = 0; j < D; ++j) {
      if (i == j) {
        c(i, j) = 1.0;
      } else if (cov(i, i) <= 0.0 || cov(j, j) <= 0.0) {
        c(i, j) = 0.0;
      } else {
        c(i, j) = std::clamp(cov(i, j) / std::sqrt(cov(i, i) * cov(j, j)), -1.0, 1.0);
      }
    }
  }
  return 0.5 * (c + c.transpose());
}

Window stack(std::span<const Window> windows, bool differences) {
  Eigen::Index rows = 0;
  for (const auto& w : windows) rows += differences ? std::max<Eigen::Index>(w.rows() - 1, 0) : w.rows();
  const Eigen::Index D = windows.empty() ? kLevels : windows.front().cols();
  Window out(rows, D);
  Eigen::Index r = 0;
  for (const auto& w : windows) {
    if (differences) {
      for (Eigen::Index t = 1; t < w.rows(); ++t) out.row(r++) = w.row(t) - w.row(t - 1);
    } else {
      out.middleRows(r, w.rows()) = w;
      r += w.rows();
    }
  }
  return out;
}

}  // namespace

Eigen::MatrixXd cross_corr(const Window& series) { return pearson_matrix(series, "cross_corr"); }

Eigen::MatrixXd cross_corr(std::span<const Window> windows) {
  return pearson_matrix(stack(windows, false), "cross_corr");
}

Eigen::MatrixXd diff_corr(const Window& series) {
  if (series.rows() < 3) throw ContractError("diff_corr: need at least 3 rows, got " + std::to_string(series.rows()));
  return pearson_matrix(stack(std::span(&series, 1), true), "diff_corr");
}

Eigen::MatrixXd diff_corr(std::span<const Window> windows) {
  return pearson_matrix(stack(windows, true), "diff_corr");
}

std::vector<double> acf(const Window& series, int level, int max_lag) {
  return acf(std::span(&series, 1), level, max_lag);
}

std::vector<double> acf(std::span<const Window> windows, int level, int max_lag) {
  if (windows.empty()) throw ContractError("acf: no data");
  if (level < 0 || level >= windows.front().cols()) throw ContractError("acf: level out of range");
  if (max_lag < 1) throw ContractError("acf: max_lag must be >= 1");
  Eigen::Index shortest = windows.front().rows();
  double sum = 0.0;
  Eigen::Index n = 0;
  for (const auto& w : windows) {
    shortest = std::min(shortest, w.rows());
    sum += w.col(level).sum();
    n += w.rows();
  }
  if (max_lag >= shortest) {
    throw ContractError("acf: max_lag " + std::to_string(max_lag) + " needs more than " + std::to_string(max_lag) +
                        " rows per series, got " + std::to_string(shortest));
  }
  if (windows.size() == 1 && n < 10 * static_cast<Eigen::Index>(max_lag)) {
    spdlog::warn("acf: series of {} rows is short for max_lag {}", n, max_lag);
  }
  const double mean = sum / static_cast<double>(n);
  double denom = 0.0;
  std::vector<double> out(static_cast<std::size_t>(max_lag), 0.0);
  for (const auto& w : windows) {
    const Eigen::VectorXd x = w.col(level).array() - mean;
    denom += x.squaredNorm();
    const Eigen::Index len = x.size();
    for (int l = 1; l <= max_lag; ++l) {
      out[static_cast<std::size_t>(l - 1)] += x.head(len - l).dot(x.tail(len - l));
    }
  }
  if (denom <= 0.0) {
    spdlog::warn("acf: level {} has zero variance", level);
    std::fill(out.begin(), out.end(), 0.0);
    return out;
  }
  for (double& v : out) v /= denom;
  return out;
}

PowerLawFit powerlaw_fit(std::span<const double> acf_values, int first_lag, int last_lag) {
  if (first_lag < 1 || last_lag < first_lag) throw ConfigError("powerlaw_fit: bad lag range");
  std::vector<double> lx, ly;
  for (int l = first_lag; l <= last_lag && l <= static_cast<int>(acf_values.size()); ++l) {
    const double v = acf_values[static_cast<std::size_t>(l - 1)];
    if (v > 0.0 && std::isfinite(v)) {
      lx.push_back(std::log(static_cast<double>(l)));
      ly.push_back(std::log(v));
    }
  }
  if (lx.size() < 5) {
    throw FitError("powerlaw_fit: only " + std::to_string(lx.size()) + " lags with positive ACF, need 5");
  }
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double e = ly[i] - (intercept + slope * lx[i]);
    ss_res += e * e;
  }
  PowerLawFit fit;
  fit.gamma = -slope;
  fit.C = std::exp(intercept);
  fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  fit.lags_used = static_cast<int>(lx.size());
  return fit;
}

MetricsReport compute_metrics(std::span<const Window> real_windows, std::span<const Window> fake_windows,
                              std::span<const Window> real_series, int max_lag) {
  if (real_windows.empty() || fake_windows.empty()) throw ContractError("compute_metrics: empty window set");
  MetricsReport r;
  r.marginals = marginal_distances(pool_levels(real_windows), pool_levels(fake_windows));
  const std::span<const Window> real = real_series.empty() ? real_windows : real_series;
  r.avg_real = avg_volume_per_level(real);
  r.avg_fake = avg_volume_per_level(fake_windows);
  r.cross_real = cross_corr(real);
  r.cross_fake = cross_corr(fake_windows);
  r.diff_real = diff_corr(real);
  r.diff_fake = diff_corr(fake_windows);

  auto shortest = [](std::span<const Window> w) {
    Eigen::Index n = w.front().rows();
    for (const auto& x : w) n = std::min(n, x.rows());
    return static_cast<int>(n);
  };
  const int fake_lag = std::min(max_lag, shortest(fake_windows) - 1);
  const int real_lag = std::min(max_lag, shortest(real) - 1);
  auto fit_or_flag = [](const std::vector<double>& a, int level, const char* side) -> std::optional<PowerLawFit> {
    try {
      return powerlaw_fit(a, 1, static_cast<int>(a.size()));
    } catch (const FitError& e) {
      spdlog::warn("{} level {} unfittable: {}", side, level, e.what());
      return std::nullopt;
    }
  };
  for (int d = 0; d < kLevels; ++d) {
    r.acf_real.push_back(acf(real, d, real_lag));
    r.acf_fake.push_back(acf(fake_windows, d, fake_lag));
    r.fit_real.push_back(fit_or_flag(r.acf_real.back(), d, "real"));
    r.fit_fake.push_back(fit_or_flag(r.acf_fake.back(), d, "fake"));
  }
  return r;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void write_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  auto out = open_out(path);
  const auto& names = level_names();
  out << "level";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << names[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << detail::format_double(m(i, j));
    out << '\n';
  }
}

void write_acf(const std::vector<std::vector<double>>& curves, const std::filesystem::path& path) {
  auto out = open_out(path);
  const auto& names = level_names();
  out << "lag";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  const std::size_t lags = curves.empty() ? 0 : curves.front().size();
  for (std::size_t l = 0; l < lags; ++l) {
    out << l + 1;
    for (const auto& c : curves) out << ',' << detail::format_double(c[l]);
    out << '\n';
  }
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json fit_json(const std::optional<PowerLawFit>& f) {
  if (!f) return nullptr;
  return {{"C", f->C}, {"gamma", f->gamma}, {"r2", f->r2}, {"lags_used", f->lags_used}};
}

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void write_metrics(const MetricsReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& names = level_names();
  {
    auto out = open_out(dir / "marginals.csv");
    out << "level,wasserstein,kl,ks\n";
    for (std::size_t d = 0; d < r.marginals.wasserstein.size(); ++d) {
      out << names[d] << ',' << detail::format_double(r.marginals.wasserstein[d]) << ','
          << detail::format_double(r.marginals.kl[d]) << ',' << detail::format_double(r.marginals.ks[d]) << '\n';
    }
    out << "mean," << detail::format_double(r.marginals.mean_wasserstein) << ','
        << detail::format_double(r.marginals.mean_kl) << ',' << detail::format_double(r.marginals.mean_ks) << '\n';
  }
  {
    auto out = open_out(dir / "avg_volume.csv");
    out << "level,real,fake\n";
    for (Eigen::Index d = 0; d < r.avg_real.size(); ++d) {
      out << names[static_cast<std::size_t>(d)] << ',' << detail::format_double(r.avg_real(d)) << ','
          << detail::format_double(r.avg_fake(d)) << '\n';
    }
  }
  write_matrix(r.cross_real, dir / "cross_corr_real.csv");
  write_matrix(r.cross_fake, dir / "cross_corr_fake.csv");
  write_matrix(r.diff_real, dir / "diff_corr_real.csv");
  write_matrix(r.diff_fake, dir / "diff_corr_fake.csv");
  write_acf(r.acf_real, dir / "acf_real.csv");
  write_acf(r.acf_fake, dir / "acf_fake.csv");
  {
    auto out = open_out(dir / "powerlaw.csv");
    out << "level,side,C,gamma,r2,lags_used\n";
    for (std::size_t d = 0; d < r.fit_real.size(); ++d) {
      for (auto [side, fit] : {std::pair{"real", &r.fit_real[d]}, std::pair{"fake", &r.fit_fake[d]}}) {
        out << names[d] << ',' << side;
        if (*fit) {
          out << ',' << detail::format_double((*fit)->C) << ',' << detail::format_double((*fit)->gamma) << ','
              << detail::format_double((*fit)->r2) << ',' << (*fit)->lags_used << '\n';
        } else {
          out << ",,,,0\n";
        }
      }
    }
  }
  nlohmann::json j;
  j["marginals"] = {{"wasserstein", r.marginals.wasserstein},
                    {"kl", r.marginals.kl},
                    {"ks", r.marginals.ks},
                    {"mean_wasserstein", r.marginals.mean_wasserstein},
                    {"mean_kl", r.marginals.mean_kl},
                    {"mean_ks", r.marginals.mean_ks}};
  j["avg_volume"] = {{"real", to_std(r.avg_real)}, {"fake", to_std(r.avg_fake)}};
  j["cross_corr"] = {{"real", matrix_json(r.cross_real)}, {"fake", matrix_json(r.cross_fake)}};
  j["diff_corr"] = {{"real", matrix_json(r.diff_real)}, {"fake", matrix_json(r.diff_fake)}};
  j["acf"] = {{"real", r.acf_real}, {"fake", r.acf_fake}};
  nlohmann::json fr = nlohmann::json::array(), ff = nlohmann::json::array();
  for (const auto& f : r.fit_real) fr.push_back(fit_json(f));
  for (const auto& f : r.fit_fake) ff.push_back(fit_json(f));
  j["powerlaw"] = {{"real", fr}, {"fake", ff}};
  auto out = open_out(dir / "metrics.json");
  out << j.dump(2) << '\n';
}

namespace {

double mean_level_w1(const LevelPools& a, const LevelPools& b) {
  double sum = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    if (a[d].empty() || b[d].empty()) throw ContractError("counterfactual_grid: empty pool at level " + std::to_string(d));
    sum += wasserstein1(a[d], b[d]);
  }
  return sum / static_cast<double>(a.size());
}

std::vector<Window> subset(std::span<const Window> all, const std::vector<std::size_t>& idx) {
  std::vector<Window> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

}  // namespace

CounterfactualGrid counterfactual_grid(std::span<const Window> real, const QuintileBins& bins,
                                       std::span<const Window> factual, std::span<const Window> over,
                                       std::span<const Window> under) {
  if (factual.empty()) throw ContractError("counterfactual_grid: missing factual set");
  if (over.empty()) throw ContractError("counterfactual_grid: missing over_liquidity set");
  if (under.empty()) throw ContractError("counterfactual_grid: missing under_liquidity set");
  if (real.empty()) throw ContractError("counterfactual_grid: missing real windows");
  if (factual.size() != real.size() || bins.bin_of.size() != real.size()) {
    throw ContractError("counterfactual_grid: factual set and bins must align with the real windows");
  }
  CounterfactualGrid g;
  g.row_names = {"Real_bin VS Fake_bin", "Real_all VS Fake_bin", "Real_bin VS Fake_OL_all",
                 "Real_bin VS Fake_UL_all"};
  const LevelPools real_all = pool_levels(real);
  const LevelPools ol_all = pool_levels(over);
  const LevelPools ul_all = pool_levels(under);
  g.cells.assign(CounterfactualGrid::kRows, std::vector<double>(bins.members.size(), 0.0));
  for (std::size_t b = 0; b < bins.members.size(); ++b) {
    const LevelPools real_bin = pool_levels(subset(real, bins.members[b]));
    const LevelPools fake_bin = pool_levels(subset(factual, bins.members[b]));
    g.cells[0][b] = mean_level_w1(real_bin, fake_bin);
    g.cells[1][b] = mean_level_w1(real_all, fake_bin);
    g.cells[2][b] = mean_level_w1(real_bin, ol_all);
    g.cells[3][b] = mean_level_w1(real_bin, ul_all);
  }
  return g;
}

void write_counterfactual_grid(const CounterfactualGrid& grid, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "row";
  for (std::size_t b = 0; b < (grid.cells.empty() ? 0 : grid.cells.front().size()); ++b) out << ",bin_" << b + 1;
  out << '\n';
  for (std::size_t r = 0; r < grid.cells.size(); ++r) {
    out << grid.row_names[r];
    for (double v : grid.cells[r]) out << ',' << detail::format_double(v);
    out << '\n';
  }
}

}  // namespace lobdiff
