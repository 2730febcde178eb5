#include "protoncast/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <set>

#include "protoncast/error.hpp"
#include "protoncast/json_io.hpp"

namespace protoncast {

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); }

void only_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) bad(where + " must be an object");
  for (const auto& [key, value] : j.items())
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end())
      bad("unknown key '" + key + "' in " + where);
}

template <typename T>
T get(const nlohmann::json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    bad(where + "." + key + " has the wrong type");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

SClass class_from(std::string_view name) {
  const auto c = parse_s_class(name);
  if (!c) bad("unknown S-class '" + std::string(name) + "'");
  return *c;
}

}  // namespace

EvalOptions RunConfig::eval_options() const {
  EvalOptions o;
  o.half_window = half_window;
  o.log_floor = log_floor;
  o.window_stride = window_stride;
  return o;
}

ModelConfig RunConfig::model_config(const Strategy& strategy, std::size_t hidden, std::size_t embed) const {
  ModelConfig c = make_config(strategy, hidden, embed, input_len, output_len);
  c.validate();
  return c;
}

nlohmann::json RunConfig::data_json() const {
  if (catalog) return {{"catalog", catalog->string()}};
  nlohmann::json mix = nlohmann::json::object();
  for (const auto& [c, n] : synth->mix) mix[std::string(to_string(c))] = n;
  return {{"synth", {{"seed", synth->seed}, {"mix", mix}, {"xray", synth->with_xray}}}};
}

ClassMix parse_class_mix(const nlohmann::json& j) {
  if (j.is_string()) return parse_class_mix(std::string_view(j.get_ref<const std::string&>()));
  if (!j.is_object()) bad("class mix must be an object such as {\"S1\": 4} or a string such as \"S1=4\"");
  ClassMix mix;
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number_unsigned()) bad("class mix count for " + key + " must be a nonnegative integer");
    mix[class_from(key)] = value.get<std::size_t>();
  }
  return mix;
}

ClassMix parse_class_mix(std::string_view text) {
  ClassMix mix;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const std::string_view item = text.substr(0, comma);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) bad("class mix item '" + std::string(item) + "' is not CLASS=COUNT");
    std::size_t count = 0;
    const auto digits = item.substr(eq + 1);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), count);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty())
      bad("class mix count '" + std::string(digits) + "' is not a nonnegative integer");
    mix[class_from(item.substr(0, eq))] = count;
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
  }
  return mix;
}

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  only_keys(doc,
            {"data", "k", "fold_seed", "strategies", "structures", "train", "preprocess", "out",
             "highlight_threshold", "workers"},
            "run config");
  RunConfig rc;

  if (!doc.contains("data")) bad("run config needs a data section");
  const auto& data = doc.at("data");
  only_keys(data, {"catalog", "synth"}, "data");
  if (data.contains("catalog") == data.contains("synth")) bad("data needs exactly one of catalog or synth");
  if (data.contains("catalog")) {
    rc.catalog = resolve(base_dir, get<std::string>(data, "catalog", "", "data"));
  } else {
    const auto& s = data.at("synth");
    only_keys(s, {"seed", "mix", "xray"}, "data.synth");
    SynthSource src;
    src.seed = get<std::uint64_t>(s, "seed", 0, "data.synth");
    src.with_xray = get<bool>(s, "xray", true, "data.synth");
    if (!s.contains("mix")) bad("data.synth needs a mix");
    src.mix = parse_class_mix(s.at("mix"));
    rc.synth = src;
  }

  rc.k = get<std::size_t>(doc, "k", 4, "run config");
  if (rc.k < 2) bad("k must be at least 2");
  rc.fold_seed = get<std::uint64_t>(doc, "fold_seed", 0, "run config");

  const auto strategies = get<std::vector<std::string>>(
      doc, "strategies", std::vector<std::string>(kStrategyNames.begin(), kStrategyNames.end()), "run config");
  std::set<std::string> seen;
  for (const auto& name : strategies) {
    rc.strategies.push_back(parse_strategy(name));
    if (!seen.insert(name).second) bad("strategy " + name + " listed twice");
  }
  if (rc.strategies.empty()) bad("strategies must not be empty");

  if (!doc.contains("structures")) bad("run config needs a structures list such as [\"64-4\"]");
  seen.clear();
  for (const auto& s : get<std::vector<std::string>>(doc, "structures", {}, "run config")) {
    try {
      rc.structures.push_back(parse_structure(s));
    } catch (const Error& e) {
      bad("structure '" + s + "': " + e.what());
    }
    if (!seen.insert(s).second) bad("structure " + s + " listed twice");
  }
  if (rc.structures.empty()) bad("structures must not be empty");

  if (doc.contains("train")) {
    only_keys(doc.at("train"), {"epochs", "batch_size", "lr", "seed", "clip_norm", "teacher_forcing"}, "train");
    rc.train = train_spec_from_json(doc.at("train"));
  }

  if (doc.contains("preprocess")) {
    const auto& p = doc.at("preprocess");
    only_keys(p, {"half_window", "log_floor", "input_len", "output_len", "window_stride"}, "preprocess");
    rc.half_window = get<std::size_t>(p, "half_window", rc.half_window, "preprocess");
    rc.log_floor = get<double>(p, "log_floor", rc.log_floor, "preprocess");
    rc.input_len = get<std::size_t>(p, "input_len", rc.input_len, "preprocess");
    rc.output_len = get<std::size_t>(p, "output_len", rc.output_len, "preprocess");
    rc.window_stride = get<std::size_t>(p, "window_stride", rc.window_stride, "preprocess");
    if (rc.window_stride == 0) bad("preprocess.window_stride must be at least 1");
  }
  // Surfaces preprocessing errors (lengths, floor) at parse time.
  for (const auto& s : rc.strategies)
    for (const auto& [h, e] : rc.structures) rc.model_config(s, h, e).preprocess(rc.half_window, rc.log_floor).validate();

  rc.out = resolve(base_dir, get<std::string>(doc, "out", "results", "run config"));
  rc.highlight_threshold = get<double>(doc, "highlight_threshold", rc.highlight_threshold, "run config");
  rc.workers = get<std::size_t>(doc, "workers", 1, "run config");
  if (rc.workers == 0) bad("workers must be at least 1");
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
  }
  return parse_run_config(doc, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

std::vector<EventRecord> load_run_events(const RunConfig& config) {
  if (config.catalog) return load_catalog(*config.catalog, config.margin());
  std::size_t n = 0;
  for (const auto& [c, count] : config.synth->mix) n += count;
  SynthOptions options;
  options.with_xray = config.synth->with_xray;
  options.margin = std::max(config.margin(), kDefaultMargin);
  return synth_event_set(n, config.synth->mix, config.synth->seed, options);
}

}  // namespace protoncast
