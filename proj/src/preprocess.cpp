#include "protoncast/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "protoncast/error.hpp"
#include "protoncast/io.hpp"
#include "protoncast/json_io.hpp"
#include "protoncast/rng.hpp"

namespace protoncast {

namespace {

// GOES soft X-ray scaling, then a rescale onto the proton dynamic range.
constexpr double kXrayScale = 0.7;
constexpr double kXrayGain = 1e7;

}  // namespace

std::string_view to_string(Features f) { return f == Features::P ? "P" : "P+XR"; }
std::string_view to_string(Variant v) { return v == Variant::orig ? "orig" : "trend"; }

void PreprocessSpec::validate() const {
  if (!(log_floor > 0.0)) throw Error(ErrorCode::InvalidArgument, "log_floor must be > 0");
  if (input_len == 0 || output_len == 0)
    throw Error(ErrorCode::InvalidArgument, "window lengths must be positive");
}

FluxSeries normalize_xray(const FluxSeries& series) {
  if (series.channel() != Channel::xray)
    throw Error(ErrorCode::WrongChannel, "normalize_xray expects the X-ray channel");
  std::vector<double> out(series.values());
  for (double& v : out) v = v / kXrayScale * kXrayGain;
  return FluxSeries(Channel::xray, series.start(), std::move(out));
}

std::vector<double> log_transform(std::span<const double> values, double floor) {
  if (!(floor > 0.0)) throw Error(ErrorCode::InvalidArgument, "log floor must be > 0");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = std::log10(std::max(values[i], floor));
  return out;
}

std::vector<double> trend_smooth(std::span<const double> values, std::size_t half_window) {
  const std::size_t n = values.size();
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = t >= half_window ? t - half_window : 0;
    const std::size_t hi = std::min(n - 1, t + half_window);
    double s = 0.0;
    for (std::size_t i = lo; i <= hi; ++i) s += values[i];
    out[t] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

PreparedChannels prepare_channels(const EventRecord& event, const PreprocessSpec& spec) {
  spec.validate();
  PreparedChannels out;
  out.proton = log_transform(event.proton.values(), spec.log_floor);
  if (spec.features == Features::P_XR) {
    if (!event.xray)
      throw Error(ErrorCode::ShapeMismatch, event.id + ": P+XR features need an X-ray channel");
    out.xray = log_transform(normalize_xray(*event.xray).values(), spec.log_floor);
  }
  if (spec.variant == Variant::trend) {
    out.proton = trend_smooth(out.proton, spec.half_window);
    if (!out.xray.empty()) out.xray = trend_smooth(out.xray, spec.half_window);
  }
  return out;
}

Sample window_at(const EventRecord& event, const PreparedChannels& prepared, const PreprocessSpec& spec,
                 std::size_t center_index) {
  const std::size_t n = prepared.proton.size();
  if (center_index + 1 < spec.input_len || center_index >= n)
    throw Error(ErrorCode::InsufficientContext,
                event.id + ": window at index " + std::to_string(center_index) + " lacks input history");
  const std::size_t f = spec.feature_count();
  Sample s;
  s.event_id = event.id;
  s.center = event.proton.time_at(center_index);
  s.input = Tensor({spec.input_len, f});
  const std::size_t first = center_index + 1 - spec.input_len;
  for (std::size_t r = 0; r < spec.input_len; ++r) {
    s.input.at(r, 0) = prepared.proton[first + r];
    if (f == 2) s.input.at(r, 1) = prepared.xray[first + r];
  }
  const std::size_t last = std::min(n - 1, center_index + spec.output_len);
  s.target.assign(prepared.proton.begin() + static_cast<std::ptrdiff_t>(center_index + 1),
                  prepared.proton.begin() + static_cast<std::ptrdiff_t>(last + 1));
  return s;
}

std::vector<Sample> make_windows(const EventRecord& event, const PreprocessSpec& spec) {
  const std::size_t onset = event.onset_index();
  const std::size_t end = event.end_index();
  const std::size_t n = event.proton.size();
  if (onset < spec.input_len || n - 1 - end < spec.output_len)
    throw Error(ErrorCode::InsufficientContext,
                event.id + ": windows need " + std::to_string(spec.input_len) + " samples before onset and " +
                    std::to_string(spec.output_len) + " after end");
  const PreparedChannels prepared = prepare_channels(event, spec);
  std::vector<Sample> out;
  out.reserve(end - onset + 1);
  for (std::size_t t = onset; t <= end; ++t) out.push_back(window_at(event, prepared, spec, t));
  return out;
}

Stratum stratum_of(SClass c) {
  switch (c) {
    case SClass::S1: return Stratum::S1;
    case SClass::S2: return Stratum::S2;
    default: return Stratum::S3S4;
  }
}

std::vector<std::string> FoldPlan::test_ids(std::size_t fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment)
    if (f == fold) out.push_back(id);
  return out;
}

std::vector<std::string> FoldPlan::train_ids(std::size_t fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : assignment)
    if (f != fold) out.push_back(id);
  return out;
}

FoldPlan stratified_folds(std::span<const std::pair<std::string, SClass>> events, std::size_t k,
                          std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
  if (events.size() < k)
    throw Error(ErrorCode::TooFewEvents,
                std::to_string(events.size()) + " events cannot fill " + std::to_string(k) + " folds");

  std::vector<std::string> s1, s2, s3, s4;
  for (const auto& [id, c] : events) {
    switch (c) {
      case SClass::S1: s1.push_back(id); break;
      case SClass::S2: s2.push_back(id); break;
      case SClass::S3: s3.push_back(id); break;
      case SClass::S4: s4.push_back(id); break;
    }
  }
  // Sort first so the plan depends on the event set, not its input order.
  for (auto* v : {&s1, &s2, &s3, &s4}) std::sort(v->begin(), v->end());

  Rng rng(seed);
  std::vector<std::size_t> fold_order(k);
  for (std::size_t i = 0; i < k; ++i) fold_order[i] = i;
  rng.shuffle(std::span<std::size_t>(fold_order));
  for (auto* v : {&s1, &s2, &s3, &s4}) rng.shuffle(std::span<std::string>(*v));

  // S4 leads the merged S3∪S4 stratum so consecutive dealing separates S4 events.
  std::vector<std::string> s34 = s4;
  s34.insert(s34.end(), s3.begin(), s3.end());

  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  std::size_t cursor = 0;
  for (const auto* stratum : {&s34, &s2, &s1}) {
    for (const auto& id : *stratum) {
      if (!plan.assignment.emplace(id, fold_order[cursor % k]).second)
        throw Error(ErrorCode::DuplicateId, "event " + id + " listed twice");
      ++cursor;
    }
  }
  return plan;
}

FoldPlan stratified_folds(std::span<const EventRecord> events, std::size_t k, std::uint64_t seed) {
  std::vector<std::pair<std::string, SClass>> ids;
  ids.reserve(events.size());
  for (const auto& e : events) ids.emplace_back(e.id, e.s_class);
  return stratified_folds(ids, k, seed);
}

void write_sample_store(const std::filesystem::path& dir, const std::string& event_id,
                        std::span<const Sample> samples, const PreprocessSpec& spec) {
  nlohmann::json manifest;
  manifest["event_id"] = event_id;
  manifest["F"] = spec.feature_count();
  manifest["count"] = samples.size();
  manifest["spec"] = to_json(spec);
  std::vector<std::string> centers;
  std::string blob;
  for (const auto& s : samples) {
    if (s.input.rows() != spec.input_len || s.input.cols() != spec.feature_count() ||
        s.target.size() != spec.output_len)
      throw Error(ErrorCode::ShapeMismatch, event_id + ": sample shape does not match spec");
    centers.push_back(format_instant(s.center));
    append_le_doubles(blob, s.input.data());
    append_le_doubles(blob, s.target);
  }
  manifest["centers"] = centers;
  write_file_atomic(dir / (event_id + ".bin"), blob);
  write_file_atomic(dir / (event_id + ".json"), manifest.dump(2) + "\n");
}

std::vector<Sample> read_sample_store(const std::filesystem::path& dir, const std::string& event_id,
                                      PreprocessSpec* spec_out) {
  const auto manifest = nlohmann::json::parse(read_text_file(dir / (event_id + ".json")));
  const PreprocessSpec spec = preprocess_spec_from_json(manifest.at("spec"));
  const auto count = manifest.at("count").get<std::size_t>();
  const auto centers = manifest.at("centers").get<std::vector<std::string>>();
  if (centers.size() != count || manifest.at("F").get<std::size_t>() != spec.feature_count())
    throw Error(ErrorCode::ShapeMismatch, event_id + ": inconsistent sample manifest");
  const std::string blob = read_text_file(dir / (event_id + ".bin"));
  const std::size_t in_size = spec.input_len * spec.feature_count();
  const std::size_t per_sample = in_size + spec.output_len;
  if (blob.size() != count * per_sample * 8)
    throw Error(ErrorCode::ShapeMismatch, event_id + ": sample blob has wrong length");
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto values = read_le_doubles(blob, i * per_sample * 8, per_sample);
    Sample s;
    s.event_id = event_id;
    const auto center = parse_instant(centers[i]);
    if (!center) throw Error(ErrorCode::MalformedRow, event_id + ": bad center timestamp");
    s.center = *center;
    s.input = Tensor({spec.input_len, spec.feature_count()},
                     std::vector<double>(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(in_size)));
    s.target.assign(values.begin() + static_cast<std::ptrdiff_t>(in_size), values.end());
    out.push_back(std::move(s));
  }
  if (spec_out) *spec_out = spec;
  return out;
}

}  // namespace protoncast
