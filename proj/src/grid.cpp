#include "protoncast/grid.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>

#include "protoncast/error.hpp"
#include "protoncast/io.hpp"
#include "protoncast/json_io.hpp"

namespace protoncast {

namespace {

constexpr const char* kManifest = "manifest.json";

std::optional<MetricsReport> reusable_report(const std::filesystem::path& manifest_path,
                                             const nlohmann::json& fingerprint) {
  if (!std::filesystem::exists(manifest_path)) return std::nullopt;
  try {
    const auto m = nlohmann::json::parse(read_text_file(manifest_path));
    if (m.value("status", "") != "complete" || m.at("cell") != fingerprint) return std::nullopt;
    return aggregate_folds(m.at("strategy").get<std::string>(), m.at("structure").get<std::string>(),
                           m.at("rmse").get<std::vector<double>>(), m.at("pct").get<std::vector<double>>());
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

nlohmann::json fold_json(const FoldMetrics& m) {
  return {{"rmse", m.rmse},
          {"pct", m.pct_error},
          {"points", m.points},
          {"windows", m.windows},
          {"near_zero_skipped", m.near_zero_skipped}};
}

CellOutcome run_cell(const RunConfig& config, const std::vector<EventRecord>& events, const FoldPlan& plan,
                     const GridCell& cell, const GridLogger& log) {
  CellOutcome outcome;
  outcome.cell = cell;
  const auto dir = config.out / "cells" / cell.dir_name();
  const auto fingerprint = cell_fingerprint(config, cell);
  if (auto report = reusable_report(dir / kManifest, fingerprint)) {
    outcome.status = CellStatus::reused;
    outcome.report = std::move(report);
    return outcome;
  }

  try {
    std::filesystem::create_directories(dir);
    const ModelConfig model = config.model_config(cell.strategy, cell.hidden, cell.embed);
    const EvalOptions eval = config.eval_options();
    const PreprocessSpec pre = model.preprocess(eval.half_window, eval.log_floor);

    std::ofstream train_log(dir / "train.jsonl", std::ios::trunc);
    nlohmann::json folds = nlohmann::json::array();
    CrossValidationHooks hooks;
    hooks.on_epoch = [&](std::size_t fold, const EpochRecord& r) {
      train_log << nlohmann::json{{"fold", fold + 1},
                                  {"epoch", r.epoch},
                                  {"mean_loss", r.mean_loss},
                                  {"wall_seconds", r.wall_seconds}}
                       .dump()
                << '\n';
      train_log.flush();
    };
    hooks.on_trained = [&](std::size_t fold, const TrainResult& trained) {
      CheckpointMeta meta{trained.history.epoch_loss.size(), trained.history.epoch_loss.back(), pre};
      save_checkpoint(dir / ("fold" + std::to_string(fold + 1) + ".ckpt"),
                      Checkpoint{trained.params, model, config.train, meta});
    };
    hooks.on_evaluated = [&](std::size_t fold, const FoldMetrics& m) {
      folds.push_back(fold_json(m));
      if (log)
        log(cell.dir_name() + " fold " + std::to_string(fold + 1) + ": rmse " + std::to_string(m.rmse) + ", pct " +
            std::to_string(m.pct_error));
    };

    MetricsReport report = cross_validate(events, model, config.train, plan, eval, hooks);
    nlohmann::json manifest = {{"status", "complete"},
                               {"strategy", report.strategy},
                               {"structure", report.structure},
                               {"cell", fingerprint},
                               {"rmse", report.rmse},
                               {"pct", report.pct},
                               {"rmse_mean", report.rmse_mean},
                               {"rmse_std", report.rmse_std},
                               {"pct_mean", report.pct_mean},
                               {"pct_std", report.pct_std},
                               {"folds", folds}};
    write_file_atomic(dir / kManifest, manifest.dump(2) + "\n");
    outcome.status = CellStatus::trained;
    outcome.report = std::move(report);
  } catch (const std::exception& e) {
    outcome.status = CellStatus::failed;
    outcome.error = e.what();
    const auto* pe = dynamic_cast<const Error*>(&e);
    outcome.validation_error = pe && is_validation_error(pe->code());
    try {
      std::filesystem::create_directories(dir);
      write_file_atomic(dir / kManifest,
                        nlohmann::json{{"status", "failed"}, {"cell", fingerprint}, {"error", outcome.error}}.dump(2) +
                            "\n");
    } catch (const std::exception&) {
    }
  }
  return outcome;
}

}  // namespace

std::vector<GridCell> grid_cells(const RunConfig& config) {
  std::vector<GridCell> cells;
  for (const auto& s : config.strategies)
    for (const auto& [h, e] : config.structures) cells.push_back({s, h, e});
  return cells;
}

nlohmann::json cell_fingerprint(const RunConfig& config, const GridCell& cell) {
  const ModelConfig model = config.model_config(cell.strategy, cell.hidden, cell.embed);
  return {{"data", config.data_json()},
          {"k", config.k},
          {"fold_seed", config.fold_seed},
          {"model", to_json(model)},
          {"train", to_json(config.train)},
          {"preprocess", to_json(model.preprocess(config.half_window, config.log_floor))},
          {"window_stride", config.window_stride}};
}

int GridSummary::exit_code() const {
  if (failed == 0) return 0;
  for (const auto& c : cells)
    if (c.status == CellStatus::failed && !c.validation_error) return 2;
  return 1;
}

void write_if_changed(const std::filesystem::path& path, const std::string& contents) {
  if (std::filesystem::exists(path)) {
    try {
      if (read_text_file(path) == contents) return;
    } catch (const Error&) {
    }
  }
  write_file_atomic(path, contents);
}

GridSummary run_grid(const RunConfig& config, const std::vector<EventRecord>& events, const GridLogger& log) {
  const FoldPlan plan = stratified_folds(events, config.k, config.fold_seed);
  const auto cells = grid_cells(config);
  std::filesystem::create_directories(config.out / "cells");

  std::mutex log_mutex;
  GridLogger safe_log;
  if (log)
    safe_log = [&](const std::string& line) {
      std::lock_guard lock(log_mutex);
      log(line);
    };

  std::vector<CellOutcome> outcomes(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      outcomes[i] = run_cell(config, events, plan, cells[i], safe_log);
      if (safe_log) {
        const auto& o = outcomes[i];
        const char* what = o.status == CellStatus::reused ? "reused" : o.status == CellStatus::trained ? "done" : "FAILED";
        safe_log(cells[i].dir_name() + ": " + what + (o.error.empty() ? "" : " (" + o.error + ")"));
      }
    }
  };
  const std::size_t n_workers = std::min(config.workers, std::max<std::size_t>(cells.size(), 1));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  GridSummary summary;
  std::vector<MetricsReport> reports;
  std::map<ResultKey, MetricsReport> table;
  for (auto& o : outcomes) {
    if (o.status == CellStatus::trained) ++summary.trained;
    if (o.status == CellStatus::reused) ++summary.reused;
    if (o.status == CellStatus::failed) ++summary.failed;
    if (o.report) {
      reports.push_back(*o.report);
      table[{o.report->strategy, o.report->structure}] = *o.report;
    }
    summary.cells.push_back(std::move(o));
  }

  write_if_changed(config.out / "grid.csv", grid_csv(reports));
  const TableDocument doc = grid_report(table, config.highlight_threshold);
  write_if_changed(config.out / "table2.txt", doc.text);
  write_if_changed(config.out / "table2.csv", doc.csv);
  write_if_changed(config.out / "table3.txt", foldwise_table(best_per_strategy(reports)));
  return summary;
}

}  // namespace protoncast
