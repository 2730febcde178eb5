#include "protoncast/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

#include "protoncast/error.hpp"
#include "protoncast/grid.hpp"
#include "protoncast/io.hpp"
#include "protoncast/json_io.hpp"
#include "protoncast/model_check.hpp"
#include "protoncast/run_config.hpp"
#include "protoncast/synth.hpp"

namespace protoncast {

namespace {

namespace fs = std::filesystem;

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> workers;

  // ingest / synth / forecast
  std::string catalog;
  std::size_t margin = kDefaultMargin;
  std::size_t max_gap = kDefaultMaxGap;
  std::string mix = "S1=20,S2=12,S3=6,S4=2";
  bool no_xray = false;

  // train / evaluate / forecast
  std::string strategy;
  std::string structure;
  std::size_t fold = 0;
  std::string checkpoint;
  std::string event;
  std::string start;

  // gradcheck
  std::size_t probes = 200;
  double tolerance = 1e-4;
};

RunConfig require_config(const Options& o) {
  if (o.config.empty()) throw Error(ErrorCode::InvalidArgument, "--config is required");
  RunConfig rc = load_run_config(o.config);
  if (o.seed) rc.train.seed = *o.seed;
  if (!o.out.empty()) rc.out = o.out;
  if (o.workers) {
    if (*o.workers == 0) throw Error(ErrorCode::InvalidArgument, "--workers must be at least 1");
    rc.workers = *o.workers;
  }
  return rc;
}

// Events of one fold (`fold` is 1-based; 0 selects every event).
std::vector<EventRecord> select_events(const RunConfig& rc, std::vector<EventRecord> events, std::size_t fold,
                                       bool test_side) {
  if (fold == 0) return events;
  if (fold > rc.k)
    throw Error(ErrorCode::InvalidArgument, "--fold " + std::to_string(fold) + " exceeds k = " + std::to_string(rc.k));
  const FoldPlan plan = stratified_folds(events, rc.k, rc.fold_seed);
  std::vector<EventRecord> picked;
  for (auto& e : events)
    if ((plan.assignment.at(e.id) == fold - 1) == test_side) picked.push_back(std::move(e));
  return picked;
}

int cmd_ingest(const Options& o, std::ostream& out) {
  fs::path catalog_path = o.catalog;
  if (catalog_path.empty() && !o.config.empty()) {
    const RunConfig rc = load_run_config(o.config);
    if (!rc.catalog) throw Error(ErrorCode::InvalidConfig, "config data section has no catalog");
    catalog_path = *rc.catalog;
  }
  if (catalog_path.empty()) throw Error(ErrorCode::InvalidArgument, "ingest needs --catalog or --config");
  if (o.out.empty()) throw Error(ErrorCode::InvalidArgument, "ingest needs --out");

  const EventCatalog catalog = parse_catalog_csv(read_text_file(catalog_path));
  const fs::path base = catalog_path.parent_path();
  const fs::path dest(o.out);
  fs::create_directories(dest / "flux");
  EventCatalog validated;
  for (const auto& entry : catalog.entries) {
    EventRecord e = [&] {
      try {
        return load_event_files(entry, base, o.margin, o.max_gap);
      } catch (const Error& err) {
        if (err.detail().starts_with(entry.id + ":") || err.detail().starts_with(entry.id + " (")) throw;
        throw Error(err.code(), entry.id + ": " + err.detail());
      }
    }();
    CatalogEntry written{e.id, e.s_class, e.flare_peak, e.onset, e.end, "flux/" + e.id + "_proton.csv", ""};
    write_file_atomic(dest / written.proton_file, write_flux_csv(e.proton));
    if (e.xray) {
      written.xray_file = "flux/" + e.id + "_xray.csv";
      write_file_atomic(dest / written.xray_file, write_flux_csv(*e.xray));
    }
    validated.entries.push_back(std::move(written));
    out << e.id << ": onset " << format_instant(e.onset) << ", end " << format_instant(e.end) << ", "
        << e.proton.size() << " samples\n";
  }
  write_file_atomic(dest / "catalog.csv", write_catalog_csv(validated));
  out << validated.entries.size() << " events written to " << dest.string() << "\n";
  return 0;
}

int cmd_synth(const Options& o, std::ostream& out) {
  SynthSource src;
  src.seed = o.seed.value_or(0);
  src.mix = parse_class_mix(std::string_view(o.mix));
  src.with_xray = !o.no_xray;
  if (!o.config.empty()) {
    const RunConfig rc = load_run_config(o.config);
    if (!rc.synth) throw Error(ErrorCode::InvalidConfig, "config data section has no synth spec");
    src = *rc.synth;
    if (o.seed) src.seed = *o.seed;
  }
  if (o.out.empty()) throw Error(ErrorCode::InvalidArgument, "synth needs --out");
  std::size_t n = 0;
  for (const auto& [c, count] : src.mix) n += count;
  SynthOptions options;
  options.with_xray = src.with_xray;
  const auto events = synth_event_set(n, src.mix, src.seed, options);
  write_synth_dataset(o.out, events);
  out << events.size() << " synthetic events written to " << o.out << "\n";
  return 0;
}

std::pair<Strategy, std::pair<std::size_t, std::size_t>> pick_cell(const Options& o, const RunConfig& rc) {
  const Strategy s = o.strategy.empty() ? rc.strategies.front() : parse_strategy(o.strategy);
  const auto st = o.structure.empty() ? rc.structures.front() : parse_structure(o.structure);
  return {s, st};
}

int cmd_train(const Options& o, std::ostream& out) {
  const RunConfig rc = require_config(o);
  const auto [strategy, structure] = pick_cell(o, rc);
  const ModelConfig model = rc.model_config(strategy, structure.first, structure.second);
  const EvalOptions eval = rc.eval_options();
  const PreprocessSpec pre = model.preprocess(eval.half_window, eval.log_floor);

  const auto events = select_events(rc, load_run_events(rc), o.fold, false);
  std::vector<Sample> samples;
  for (const auto& e : events) {
    auto w = thin_windows(make_windows(e, pre), eval.window_stride);
    std::move(w.begin(), w.end(), std::back_inserter(samples));
  }

  const fs::path ckpt = o.out.empty() ? rc.out / "model.ckpt" : fs::path(o.out);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  std::ofstream log(ckpt.string() + ".train.jsonl", std::ios::trunc);
  const TrainResult result = train(samples, model, rc.train, [&](const EpochRecord& r) {
    log << epoch_log_line(r) << '\n';
    log.flush();
  });
  const CheckpointMeta meta{result.history.epoch_loss.size(), result.history.epoch_loss.back(), pre};
  save_checkpoint(ckpt, Checkpoint{result.params, model, rc.train, meta});
  out << nlohmann::json{{"checkpoint", ckpt.string()},
                        {"strategy", strategy.name()},
                        {"structure", model.structure()},
                        {"samples", samples.size()},
                        {"epochs", meta.epoch},
                        {"final_loss", meta.loss}}
             .dump()
      << "\n";
  return 0;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw Error(ErrorCode::InvalidArgument, "evaluate needs --checkpoint");
  const RunConfig rc = require_config(o);
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  EvalOptions eval = rc.eval_options();
  eval.half_window = ck.meta.preprocess.half_window;
  eval.log_floor = ck.meta.preprocess.log_floor;

  const auto events = select_events(rc, load_run_events(rc), o.fold, true);
  const FoldMetrics m = evaluate_fold(events, ck.params, ck.config, eval);
  const std::string text = nlohmann::json{{"strategy", ck.config.strategy().name()},
                                          {"structure", ck.config.structure()},
                                          {"events", events.size()},
                                          {"windows", m.windows},
                                          {"points", m.points},
                                          {"near_zero_skipped", m.near_zero_skipped},
                                          {"rmse", m.rmse},
                                          {"pct_error", m.pct_error}}
                               .dump() +
                           "\n";
  if (!o.out.empty()) write_file_atomic(o.out, text);
  out << text;
  return 0;
}

int cmd_grid(const Options& o, std::ostream& out, std::ostream& err) {
  const RunConfig rc = require_config(o);
  const auto events = load_run_events(rc);
  const GridSummary summary = run_grid(rc, events, [&](const std::string& line) { err << line << "\n"; });
  out << "grid: " << summary.trained << " trained, " << summary.reused << " reused, " << summary.failed
      << " failed; results in " << rc.out.string() << "\n";
  for (const auto& c : summary.cells)
    if (c.status == CellStatus::failed) err << c.cell.dir_name() << ": " << c.error << "\n";
  return summary.exit_code();
}

std::string forecast_csv(const Checkpoint& ck, const EventRecord& event, Instant start) {
  const PreprocessSpec& pre = ck.meta.preprocess;
  const auto index = event.proton.index_of(start);
  if (!index)
    throw Error(ErrorCode::InvalidArgument, "start " + format_instant(start) + " is not a sample time of event " +
                                                event.id);
  if (*index + 1 < pre.input_len)
    throw Error(ErrorCode::InsufficientHistory,
                "event " + event.id + " has " + std::to_string(*index + 1) + " samples up to " +
                    format_instant(start) + ", need " + std::to_string(pre.input_len));

  const PreparedChannels prepared = prepare_channels(event, pre);
  const Sample s = window_at(event, prepared, pre, *index);
  Seq2SeqPass pass(ck.params, ck.config);
  const auto& pred = pass.run(s.input, std::nullopt);

  std::string csv = "timestamp,kind,value_log10\n";
  const std::size_t first = *index + 1 - pre.input_len;
  for (std::size_t r = 0; r < pre.input_len; ++r)
    csv += format_instant(event.proton.time_at(first + r)) + ",input," + shortest(s.input.at(r, 0)) + "\n";
  for (std::size_t j = 0; j < s.target.size(); ++j)
    csv += format_instant(event.proton.time_at(*index + 1 + j)) + ",observed," + shortest(s.target[j]) + "\n";
  for (std::size_t j = 0; j < pred.size(); ++j)
    csv += format_instant(start + kCadence * static_cast<long>(j + 1)) + ",predicted," + shortest(pred[j]) + "\n";
  return csv;
}

int cmd_forecast(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw Error(ErrorCode::InvalidArgument, "forecast needs --checkpoint");
  if (o.event.empty()) throw Error(ErrorCode::InvalidArgument, "forecast needs --event");
  const auto start = parse_instant(o.start);
  if (!start) throw Error(ErrorCode::InvalidArgument, "--start '" + o.start + "' is not an ISO-8601 time");
  const Checkpoint ck = load_checkpoint(o.checkpoint);

  std::vector<EventRecord> events;
  if (!o.catalog.empty()) {
    events = load_catalog(o.catalog, std::max(ck.config.input_len, ck.config.output_len));
  } else if (!o.config.empty()) {
    events = load_run_events(load_run_config(o.config));
  } else {
    throw Error(ErrorCode::InvalidArgument, "forecast needs --catalog or --config for the event data");
  }
  const auto it = std::find_if(events.begin(), events.end(), [&](const EventRecord& e) { return e.id == o.event; });
  if (it == events.end()) throw Error(ErrorCode::UnknownEvent, "no event with id '" + o.event + "'");

  const std::string csv = forecast_csv(ck, *it, *start);
  if (o.out.empty()) {
    out << csv;
  } else {
    write_file_atomic(o.out, csv);
    out << "forecast written to " << o.out << "\n";
  }
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const ModelCheckSummary s = model_grad_check(o.seed.value_or(0), o.probes, o.tolerance);
  for (const auto& c : s.cases)
    out << c.label << ": max rel error " << c.report.max_rel_error << " over " << c.report.probes
        << " probes (worst " << c.report.worst_parameter << "[" << c.report.worst_index << "] analytic "
        << c.report.worst_analytic << ", numeric " << c.report.worst_numeric << ")\n";
  out << (s.passed ? "PASS" : "FAIL") << ": max rel error " << s.max_rel_error << " over " << s.probes
      << " probes, tolerance " << o.tolerance << "\n";
  return s.passed ? 0 : 2;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Proton flux forecasting with LSTM encoder-decoder models", "protoncast"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool seed, bool workers) {
    sub->add_option("--config", o.config, "Run configuration (JSON)");
    sub->add_option("--out", o.out, "Output path");
    if (seed) sub->add_option("--seed", o.seed, "Seed override");
    if (workers) sub->add_option("--workers", o.workers, "Concurrent grid cells");
  };

  auto* ingest = app.add_subcommand("ingest", "Validate a catalog and write cleaned event files");
  common(ingest, false, false);
  ingest->add_option("--catalog", o.catalog, "Catalog CSV");
  ingest->add_option("--margin", o.margin, "Samples of context required around each event");
  ingest->add_option("--max-gap", o.max_gap, "Longest interpolated gap in samples");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic event catalog");
  common(synth, true, false);
  synth->add_option("--mix", o.mix, "Class counts, e.g. S1=20,S2=12,S3=6,S4=2");
  synth->add_flag("--no-xray", o.no_xray, "Omit the X-ray channel");

  auto* train_cmd = app.add_subcommand("train", "Train one model and write a checkpoint");
  common(train_cmd, true, false);
  train_cmd->add_option("--strategy", o.strategy, "Strategy name, e.g. P_orig_OS");
  train_cmd->add_option("--structure", o.structure, "Model structure H-E, e.g. 64-4");
  train_cmd->add_option("--fold", o.fold, "Train on the complement of this fold (1-based; 0 = all events)");

  auto* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  common(eval_cmd, false, false);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--fold", o.fold, "Evaluate on this fold only (1-based; 0 = all events)");

  auto* grid = app.add_subcommand("grid", "Cross-validate every strategy and structure in the config");
  common(grid, true, true);

  auto* forecast = app.add_subcommand("forecast", "Write input, observed and predicted series as CSV");
  common(forecast, false, false);
  forecast->add_option("--checkpoint", o.checkpoint, "Checkpoint file")->required();
  forecast->add_option("--catalog", o.catalog, "Catalog CSV holding the event");
  forecast->add_option("--event", o.event, "Event id")->required();
  forecast->add_option("--start", o.start, "Forecast issue time (last input sample)")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the model gradients");
  gradcheck->add_option("--seed", o.seed, "Seed");
  gradcheck->add_option("--probes", o.probes, "Probed parameters per decoding path");
  gradcheck->add_option("--tolerance", o.tolerance, "Largest accepted relative error");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(o, out);
    if (synth->parsed()) return cmd_synth(o, out);
    if (train_cmd->parsed()) return cmd_train(o, out);
    if (eval_cmd->parsed()) return cmd_evaluate(o, out);
    if (grid->parsed()) return cmd_grid(o, out, err);
    if (forecast->parsed()) return cmd_forecast(o, out);
    if (gradcheck->parsed()) return cmd_gradcheck(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace protoncast
