#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "protoncast/evaluate.hpp"
#include "protoncast/run_config.hpp"

namespace protoncast {

struct GridCell {
  Strategy strategy;
  std::size_t hidden = 0;
  std::size_t embed = 0;

  std::string structure() const { return std::to_string(hidden) + "-" + std::to_string(embed); }
  // Directory name under <out>/cells.
  std::string dir_name() const { return strategy.name() + "__" + structure(); }
};

// Cells in config order: strategies outer, structures inner.
std::vector<GridCell> grid_cells(const RunConfig& config);

// Everything that determines a cell's results; a stored manifest is reused only
// when its fingerprint matches.
nlohmann::json cell_fingerprint(const RunConfig& config, const GridCell& cell);

enum class CellStatus { trained, reused, failed };

struct CellOutcome {
  GridCell cell;
  CellStatus status = CellStatus::failed;
  std::optional<MetricsReport> report;
  std::string error;
  bool validation_error = false;
};

struct GridSummary {
  std::vector<CellOutcome> cells;
  std::size_t trained = 0;
  std::size_t reused = 0;
  std::size_t failed = 0;
  // 0 when every cell completed; 1 when all failures were validation errors; 2 otherwise.
  int exit_code() const;
};

using GridLogger = std::function<void(const std::string&)>;

// Cross-validates every cell (up to config.workers at a time) and writes
// cells/<cell>/{manifest.json, fold<i>.ckpt, train.jsonl} plus grid.csv,
// table2.txt, table2.csv and table3.txt (best structure per strategy) under config.out.
GridSummary run_grid(const RunConfig& config, const std::vector<EventRecord>& events, const GridLogger& log = {});

// Rewrites `path` atomically unless it already holds exactly `contents`.
void write_if_changed(const std::filesystem::path& path, const std::string& contents);

}  // namespace protoncast
