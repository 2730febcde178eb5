#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "protoncast/catalog.hpp"
#include "protoncast/preprocess.hpp"
#include "protoncast/seq2seq.hpp"
#include "protoncast/trainer.hpp"

namespace protoncast {

double rmse_log(std::span<const double> pred, std::span<const double> obs);

// What pct_error does with reference values |obs| < 0.1 (log10 units).
enum class NearZeroPolicy { reject, skip };

inline constexpr double kNearZeroReference = 0.1;

// 100·mean(|pred − obs| / |obs|) on log10 values.
double pct_error(std::span<const double> pred, std::span<const double> obs,
                 NearZeroPolicy policy = NearZeroPolicy::reject);

// Flat pool of residuals across windows and events.
class ResidualPool {
 public:
  explicit ResidualPool(NearZeroPolicy policy = NearZeroPolicy::skip) : policy_(policy) {}

  void add(std::span<const double> pred, std::span<const double> obs);

  std::size_t points() const { return points_; }
  std::size_t pct_points() const { return pct_points_; }
  std::size_t near_zero_skipped() const { return skipped_; }
  double rmse() const;
  double pct_error() const;

 private:
  NearZeroPolicy policy_;
  std::size_t points_ = 0;
  std::size_t pct_points_ = 0;
  std::size_t skipped_ = 0;
  double sum_sq_ = 0.0;
  double sum_rel_ = 0.0;
};

struct FoldMetrics {
  double rmse = 0.0;
  double pct_error = 0.0;
  std::size_t points = 0;
  std::size_t windows = 0;
  std::size_t near_zero_skipped = 0;
};

using Predictor = std::function<std::vector<double>(const Sample&)>;

FoldMetrics evaluate_samples(std::span<const Sample> samples, const Predictor& predict,
                             NearZeroPolicy policy = NearZeroPolicy::skip);

struct EvalOptions {
  std::size_t half_window = 6;
  double log_floor = 1e-3;
  // Keep every n-th window (1 keeps all).
  std::size_t window_stride = 1;
  NearZeroPolicy near_zero = NearZeroPolicy::skip;
};

// Windows every test event with the config's preprocessing, predicts without
// teacher forcing and pools all residuals.
FoldMetrics evaluate_fold(std::span<const EventRecord> test_events, const ParameterStore& params,
                          const ModelConfig& config, const EvalOptions& options = {});

// Every k-th element, starting with the first.
std::vector<Sample> thin_windows(std::vector<Sample> samples, std::size_t stride);

struct MetricsReport {
  std::string strategy;
  std::string structure;
  std::vector<double> rmse;  // per fold, log10 units
  std::vector<double> pct;   // per fold, %
  double rmse_mean = 0.0;
  double rmse_std = 0.0;  // population (÷k)
  double pct_mean = 0.0;
  double pct_std = 0.0;
};

double mean(std::span<const double> values);
double population_std(std::span<const double> values);

MetricsReport aggregate_folds(std::string strategy, std::string structure, std::vector<double> rmse,
                              std::vector<double> pct);

struct CrossValidationHooks {
  // Called after each fold's model is trained (fold index is 0-based).
  std::function<void(std::size_t fold, const TrainResult&)> on_trained;
  std::function<void(std::size_t fold, const EpochRecord&)> on_epoch;
  std::function<void(std::size_t fold, const FoldMetrics&)> on_evaluated;
};

MetricsReport cross_validate(std::span<const EventRecord> events, const ModelConfig& config, const TrainSpec& spec,
                             const FoldPlan& plan, const EvalOptions& options = {},
                             const CrossValidationHooks& hooks = {});

// "0.303 // 11.03%"
std::string format_cell(double rmse, double pct);

using ResultKey = std::pair<std::string, std::string>;  // (strategy, structure)

struct TableDocument {
  std::string csv;
  std::string text;
};

// Rows are structures (largest first), columns the six strategies; cells with
// mean RMSE below the threshold are wrapped in ** **.
TableDocument grid_report(const std::map<ResultKey, MetricsReport>& results, double highlight_threshold);

// Lowest mean RMSE per strategy, in table column order.
std::vector<MetricsReport> best_per_strategy(std::span<const MetricsReport> reports);

std::string foldwise_table(std::span<const MetricsReport> reports);

// Long format: strategy,structure,fold,rmse,pct with k fold rows and a "mean" row per cell.
std::string grid_csv(std::span<const MetricsReport> reports);

}  // namespace protoncast
