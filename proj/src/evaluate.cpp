#include "protoncast/evaluate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <set>

#include "protoncast/error.hpp"

namespace protoncast {

namespace {

void require_pair(std::span<const double> pred, std::span<const double> obs, const char* what) {
  if (pred.size() != obs.size() || pred.empty())
    throw Error(ErrorCode::ShapeMismatch, std::string(what) + ": prediction has " + std::to_string(pred.size()) +
                                              " points, reference " + std::to_string(obs.size()));
}

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

// Orders "H-E" labels by H then E, largest first; anything unparsable sorts last.
bool structure_before(const std::string& a, const std::string& b) {
  auto key = [](const std::string& s) -> std::pair<long, long> {
    try {
      const auto [h, e] = parse_structure(s);
      return {static_cast<long>(h), static_cast<long>(e)};
    } catch (const Error&) {
      return {-1, -1};
    }
  };
  const auto ka = key(a);
  const auto kb = key(b);
  if (ka != kb) return ka > kb;
  return a < b;
}

std::string render_aligned(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], r[c].size());
    }
  std::string out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string line;
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      if (c) line += " | ";
      line += pad(rows[i][c], width[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
    if (i == 0) {
      std::string rule;
      for (std::size_t c = 0; c < width.size(); ++c) {
        if (c) rule += "-+-";
        rule += std::string(width[c], '-');
      }
      out += rule + "\n";
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

}  // namespace

double rmse_log(std::span<const double> pred, std::span<const double> obs) {
  require_pair(pred, obs, "rmse_log");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - obs[i]) * (pred[i] - obs[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double pct_error(std::span<const double> pred, std::span<const double> obs, NearZeroPolicy policy) {
  require_pair(pred, obs, "pct_error");
  ResidualPool pool(policy);
  pool.add(pred, obs);
  return pool.pct_error();
}

void ResidualPool::add(std::span<const double> pred, std::span<const double> obs) {
  require_pair(pred, obs, "residual pool");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - obs[i];
    sum_sq_ += d * d;
    ++points_;
    if (std::abs(obs[i]) < kNearZeroReference) {
      if (policy_ == NearZeroPolicy::reject)
        throw Error(ErrorCode::NearZeroReference, "reference value " + std::to_string(obs[i]) +
                                                      " is within 0.1 of zero at point " + std::to_string(i));
      ++skipped_;
      continue;
    }
    sum_rel_ += std::abs(d) / std::abs(obs[i]);
    ++pct_points_;
  }
}

double ResidualPool::rmse() const {
  if (points_ == 0) throw Error(ErrorCode::InvalidArgument, "empty residual pool");
  return std::sqrt(sum_sq_ / static_cast<double>(points_));
}

double ResidualPool::pct_error() const {
  if (pct_points_ == 0) throw Error(ErrorCode::NearZeroReference, "no reference values usable for percentage error");
  return 100.0 * sum_rel_ / static_cast<double>(pct_points_);
}

FoldMetrics evaluate_samples(std::span<const Sample> samples, const Predictor& predict, NearZeroPolicy policy) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "no evaluation windows");
  ResidualPool pool(policy);
  for (const auto& s : samples) {
    const auto pred = predict(s);
    pool.add(std::span<const double>(pred).first(std::min(pred.size(), s.target.size())), s.target);
  }
  return {pool.rmse(), pool.pct_error(), pool.points(), samples.size(), pool.near_zero_skipped()};
}

std::vector<Sample> thin_windows(std::vector<Sample> samples, std::size_t stride) {
  if (stride <= 1) return samples;
  std::vector<Sample> out;
  out.reserve(samples.size() / stride + 1);
  for (std::size_t i = 0; i < samples.size(); i += stride) out.push_back(std::move(samples[i]));
  return out;
}

FoldMetrics evaluate_fold(std::span<const EventRecord> test_events, const ParameterStore& params,
                          const ModelConfig& config, const EvalOptions& options) {
  if (test_events.empty()) throw Error(ErrorCode::InvalidArgument, "empty test fold");
  const PreprocessSpec spec = config.preprocess(options.half_window, options.log_floor);
  Seq2SeqPass pass(params, config);
  ResidualPool pool(options.near_zero);
  std::size_t windows = 0;
  for (const auto& event : test_events) {
    const auto samples = thin_windows(make_windows(event, spec), options.window_stride);
    for (const auto& s : samples) {
      check_sample(s, config, true);
      pool.add(pass.run(s.input, std::nullopt), s.target);
      ++windows;
    }
  }
  return {pool.rmse(), pool.pct_error(), pool.points(), windows, pool.near_zero_skipped()};
}

double mean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "mean of nothing");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double population_std(std::span<const double> values) {
  const double m = mean(values);
  double s = 0.0;
  for (double v : values) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(values.size()));
}

MetricsReport aggregate_folds(std::string strategy, std::string structure, std::vector<double> rmse,
                              std::vector<double> pct) {
  if (rmse.empty() || rmse.size() != pct.size())
    throw Error(ErrorCode::ShapeMismatch, "fold metric vectors must be nonempty and of equal length");
  MetricsReport r{std::move(strategy), std::move(structure), std::move(rmse), std::move(pct)};
  r.rmse_mean = mean(r.rmse);
  r.rmse_std = population_std(r.rmse);
  r.pct_mean = mean(r.pct);
  r.pct_std = population_std(r.pct);
  return r;
}

MetricsReport cross_validate(std::span<const EventRecord> events, const ModelConfig& config, const TrainSpec& spec,
                             const FoldPlan& plan, const EvalOptions& options, const CrossValidationHooks& hooks) {
  config.validate();
  for (const auto& e : events)
    if (!plan.assignment.count(e.id))
      throw Error(ErrorCode::InvalidArgument, "fold plan does not cover event " + e.id);
  const PreprocessSpec pre = config.preprocess(options.half_window, options.log_floor);

  std::vector<double> rmse, pct;
  for (std::size_t fold = 0; fold < plan.k; ++fold) {
    std::vector<EventRecord> test;
    std::vector<Sample> train_samples;
    for (const auto& e : events) {
      if (plan.assignment.at(e.id) == fold) {
        test.push_back(e);
      } else {
        auto windows = thin_windows(make_windows(e, pre), options.window_stride);
        std::move(windows.begin(), windows.end(), std::back_inserter(train_samples));
      }
    }
    EpochCallback on_epoch;
    if (hooks.on_epoch) on_epoch = [&](const EpochRecord& r) { hooks.on_epoch(fold, r); };
    const TrainResult trained = train(train_samples, config, spec, on_epoch);
    if (hooks.on_trained) hooks.on_trained(fold, trained);
    const FoldMetrics m = evaluate_fold(test, trained.params, config, options);
    if (hooks.on_evaluated) hooks.on_evaluated(fold, m);
    rmse.push_back(m.rmse);
    pct.push_back(m.pct_error);
  }
  return aggregate_folds(config.strategy().name(), config.structure(), std::move(rmse), std::move(pct));
}

std::string format_cell(double rmse, double pct) { return fixed(rmse, 3) + " // " + fixed(pct, 2) + "%"; }

TableDocument grid_report(const std::map<ResultKey, MetricsReport>& results, double highlight_threshold) {
  std::set<std::string, decltype(&structure_before)> structures(&structure_before);
  for (const auto& [key, r] : results) structures.insert(key.second);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Model structure (Unit-Embed Size)"};
  for (auto name : kStrategyNames) header.emplace_back(name);
  rows.push_back(header);
  for (const auto& structure : structures) {
    std::vector<std::string> row{structure};
    for (auto name : kStrategyNames) {
      const auto it = results.find({std::string(name), structure});
      if (it == results.end()) {
        row.emplace_back();
        continue;
      }
      std::string cell = format_cell(it->second.rmse_mean, it->second.pct_mean);
      if (it->second.rmse_mean < highlight_threshold) cell = "**" + cell + "**";
      row.push_back(cell);
    }
    rows.push_back(row);
  }

  TableDocument doc;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (c) doc.csv += ',';
      doc.csv += csv_field(r[c]);
    }
    doc.csv += '\n';
  }

  // Text layout: data-group banner over the strategy columns, a rule under the
  // header and between hidden-size groups.
  std::vector<std::size_t> width(rows.front().size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  auto join = [&](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) line += " | ";
      line += pad(cells[c], width[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    return line + "\n";
  };
  auto rule = [&] {
    std::string line;
    for (std::size_t c = 0; c < width.size(); ++c) {
      if (c) line += "-+-";
      line += std::string(width[c], '-');
    }
    return line + "\n";
  };
  const std::size_t orig_width = width[1] + width[2] + width[3] + width[4] + 9;
  const std::size_t trend_width = width[5] + width[6] + 3;
  std::string banner = pad("", width[0]) + " | " + pad("Original data", orig_width) + " | " +
                       pad("Trend-smoothed data", trend_width);
  while (!banner.empty() && banner.back() == ' ') banner.pop_back();

  doc.text = "RMSE // percentage error averaged over all folds; ** marks RMSE below " +
             fixed(highlight_threshold, 3) + "\n\n" + banner + "\n" + join(rows[0]) + rule();
  std::optional<std::size_t> group;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::optional<std::size_t> h;
    try {
      h = parse_structure(rows[i][0]).first;
    } catch (const Error&) {
    }
    if (i > 1 && h != group) doc.text += rule();
    group = h;
    doc.text += join(rows[i]);
  }
  return doc;
}

std::vector<MetricsReport> best_per_strategy(std::span<const MetricsReport> reports) {
  std::vector<MetricsReport> best;
  for (auto name : kStrategyNames) {
    const MetricsReport* pick = nullptr;
    for (const auto& r : reports)
      if (r.strategy == name && (!pick || r.rmse_mean < pick->rmse_mean)) pick = &r;
    if (pick) best.push_back(*pick);
  }
  return best;
}

std::string foldwise_table(std::span<const MetricsReport> reports) {
  std::size_t k = 0;
  for (const auto& r : reports) k = std::max(k, r.rmse.size());
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Forecasting strategy", "Model structure", "RMSE // Percentage error (Standard deviation)"};
  for (std::size_t f = 0; f < k; ++f) header.push_back("CV" + std::to_string(f + 1));
  rows.push_back(header);
  for (const auto& r : reports) {
    std::vector<std::string> row{r.strategy, r.structure,
                                 format_cell(r.rmse_mean, r.pct_mean) + " (" + fixed(r.rmse_std, 3) + " // " +
                                     fixed(r.pct_std, 2) + ")"};
    for (std::size_t f = 0; f < r.rmse.size(); ++f) row.push_back(format_cell(r.rmse[f], r.pct[f]));
    rows.push_back(row);
  }
  return render_aligned(rows);
}

std::string grid_csv(std::span<const MetricsReport> reports) {
  std::string out = "strategy,structure,fold,rmse,pct\n";
  for (const auto& r : reports) {
    const std::string prefix = csv_field(r.strategy) + "," + csv_field(r.structure) + ",";
    for (std::size_t f = 0; f < r.rmse.size(); ++f)
      out += prefix + std::to_string(f + 1) + "," + shortest(r.rmse[f]) + "," + shortest(r.pct[f]) + "\n";
    out += prefix + "mean," + shortest(r.rmse_mean) + "," + shortest(r.pct_mean) + "\n";
  }
  return out;
}

}  // namespace protoncast
