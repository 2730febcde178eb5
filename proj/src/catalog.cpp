#include "protoncast/catalog.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "protoncast/error.hpp"

namespace protoncast {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(sep, pos);
    out.push_back(trim(line.substr(pos, next == std::string_view::npos ? next : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

// Iterates over lines, tracking 1-based line numbers.
class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  bool next(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    const auto nl = text_.find('\n', pos_);
    line = text_.substr(pos_, nl == std::string_view::npos ? std::string_view::npos : nl - pos_);
    pos_ = nl == std::string_view::npos ? text_.size() : nl + 1;
    ++number_;
    line = trim(line);
    return true;
  }

  std::size_t number() const { return number_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t number_ = 0;
};

std::string at_line(std::size_t n) { return "line " + std::to_string(n); }

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::string_view to_string(Channel channel) {
  return channel == Channel::proton ? "proton_ge10MeV" : "xray_0p1_0p8nm";
}

std::string_view to_string(SClass s_class) {
  switch (s_class) {
    case SClass::S1: return "S1";
    case SClass::S2: return "S2";
    case SClass::S3: return "S3";
    case SClass::S4: return "S4";
  }
  return "S?";
}

std::optional<SClass> parse_s_class(std::string_view text) {
  if (text == "S1") return SClass::S1;
  if (text == "S2") return SClass::S2;
  if (text == "S3") return SClass::S3;
  if (text == "S4") return SClass::S4;
  return std::nullopt;
}

FluxSeries::FluxSeries(Channel channel, Instant start, std::vector<double> values)
    : channel_(channel), start_(start), values_(std::move(values)) {
  if (values_.empty()) throw Error(ErrorCode::EmptySeries, "flux series has no samples");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i]) || values_[i] <= 0.0)
      throw Error(ErrorCode::NonPositiveFlux,
                  "sample " + std::to_string(i) + " is not a positive finite flux");
  }
}

std::optional<std::size_t> FluxSeries::index_of(Instant t) const {
  const auto offset = (t - start_).count();
  if (offset < 0 || offset % kCadence.count() != 0) return std::nullopt;
  const auto index = static_cast<std::size_t>(offset / kCadence.count());
  if (index >= values_.size()) return std::nullopt;
  return index;
}

RawSeries parse_flux_csv(std::string_view text, Channel channel) {
  RawSeries raw;
  raw.channel = channel;
  LineReader reader(text);
  std::string_view line;
  // Header, skipping leading blank lines.
  bool have_header = false;
  while (reader.next(line)) {
    if (line.empty()) continue;
    if (line != "timestamp,flux")
      throw Error(ErrorCode::MalformedRow, at_line(reader.number()) + ": expected header 'timestamp,flux'");
    have_header = true;
    break;
  }
  if (!have_header) throw Error(ErrorCode::EmptySeries, "no header and no data rows");
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 2)
      throw Error(ErrorCode::MalformedRow, at_line(reader.number()) + ": expected 2 fields");
    const auto t = parse_instant(fields[0]);
    if (!t) throw Error(ErrorCode::MalformedRow, at_line(reader.number()) + ": bad timestamp");
    const auto v = parse_double(fields[1]);
    if (!v || !std::isfinite(*v))
      throw Error(ErrorCode::MalformedRow, at_line(reader.number()) + ": bad flux value");
    if (*v <= 0.0)
      throw Error(ErrorCode::NonPositiveFlux, at_line(reader.number()) + ": flux must be > 0");
    raw.times.push_back(*t);
    raw.values.push_back(*v);
  }
  if (raw.values.empty()) throw Error(ErrorCode::EmptySeries, "no data rows");
  return raw;
}

std::string write_flux_csv(const FluxSeries& series) {
  std::string out = "timestamp,flux\n";
  out.reserve(out.size() + series.size() * 40);
  for (std::size_t i = 0; i < series.size(); ++i) {
    out += format_instant(series.time_at(i));
    out += ',';
    out += shortest(series[i]);
    out += '\n';
  }
  return out;
}

FluxSeries resample_to_cadence(const RawSeries& raw, std::size_t max_gap) {
  if (raw.values.empty()) throw Error(ErrorCode::EmptySeries, "nothing to resample");
  if (raw.times.size() != raw.values.size())
    throw Error(ErrorCode::MalformedRow, "timestamp and value counts differ");
  const Instant start = raw.times.front();
  const long step = kCadence.count();
  std::vector<double> out;
  out.push_back(raw.values.front());
  for (std::size_t i = 1; i < raw.times.size(); ++i) {
    const long dt = (raw.times[i] - raw.times[i - 1]).count();
    if (dt <= 0)
      throw Error(ErrorCode::NonMonotonicTime, "row " + std::to_string(i + 1) + " is not after its predecessor");
    if ((raw.times[i] - start).count() % step != 0)
      throw Error(ErrorCode::MisalignedTime,
                  "row " + std::to_string(i + 1) + " is off the 300 s grid of the first row");
    const auto missing = static_cast<std::size_t>(dt / step - 1);
    if (missing > max_gap)
      throw Error(ErrorCode::GapTooLong, std::to_string(missing) + " missing samples before " +
                                             format_instant(raw.times[i]));
    if (missing > 0) {
      // Log-linear interpolation across the gap.
      const double a = std::log10(raw.values[i - 1]);
      const double b = std::log10(raw.values[i]);
      const double n = static_cast<double>(missing + 1);
      for (std::size_t k = 1; k <= missing; ++k)
        out.push_back(std::pow(10.0, a + (b - a) * static_cast<double>(k) / n));
    }
    out.push_back(raw.values[i]);
  }
  return FluxSeries(raw.channel, start, std::move(out));
}

EventSpan detect_onset_end(const FluxSeries& proton, double threshold) {
  const auto& v = proton.values();
  std::size_t onset = 0;
  while (onset < v.size() && v[onset] < threshold) ++onset;
  if (onset == v.size()) throw Error(ErrorCode::NoEvent, "flux never reaches threshold");
  std::size_t end = onset;
  while (end + 1 < v.size() && v[end + 1] >= threshold) ++end;
  return {onset, end};
}

EventRecord load_event(const CatalogEntry& entry, FluxSeries proton, std::optional<FluxSeries> xray,
                       std::size_t margin) {
  if (proton.channel() != Channel::proton)
    throw Error(ErrorCode::ChannelMismatch, entry.id + ": proton file holds a non-proton channel");
  const EventSpan detected = detect_onset_end(proton);

  auto check_against_catalog = [&](const std::optional<Instant>& listed, std::size_t found,
                                   const char* what) {
    if (!listed) return;
    const long diff = (*listed - proton.time_at(found)).count() / kCadence.count();
    if (std::abs(diff) > kOnsetTolerance)
      throw Error(ErrorCode::OnsetMismatch, entry.id + ": catalog " + what + " " + format_instant(*listed) +
                                                " differs from detected " +
                                                format_instant(proton.time_at(found)));
  };
  check_against_catalog(entry.onset, detected.onset, "onset");
  check_against_catalog(entry.end, detected.end, "end");

  const std::size_t after = proton.size() - 1 - detected.end;
  if (detected.onset < margin || after < margin)
    throw Error(ErrorCode::InsufficientContext,
                entry.id + ": " + std::to_string(detected.onset) + " samples before onset and " +
                    std::to_string(after) + " after end, need " + std::to_string(margin));

  if (xray) {
    if (xray->channel() != Channel::xray)
      throw Error(ErrorCode::ChannelMismatch, entry.id + ": xray file holds a non-xray channel");
    if (xray->start() != proton.start() || xray->size() != proton.size())
      throw Error(ErrorCode::ChannelMismatch, entry.id + ": xray range " + format_instant(xray->start()) +
                                                  ".." + format_instant(xray->last()) +
                                                  " differs from proton range " +
                                                  format_instant(proton.start()) + ".." +
                                                  format_instant(proton.last()));
  }

  const Instant onset = proton.time_at(detected.onset);
  const Instant end = proton.time_at(detected.end);
  return EventRecord{entry.id, entry.s_class, entry.flare_peak, onset, end, std::move(proton), std::move(xray)};
}

EventCatalog parse_catalog_csv(std::string_view text) {
  EventCatalog catalog;
  LineReader reader(text);
  std::string_view line;
  bool have_header = false;
  while (reader.next(line)) {
    if (line.empty()) continue;
    if (line != "id,s_class,flare_peak,onset,end,proton_file,xray_file")
      throw Error(ErrorCode::MalformedRow, "catalog " + at_line(reader.number()) + ": unexpected header");
    have_header = true;
    break;
  }
  if (!have_header) throw Error(ErrorCode::EmptySeries, "catalog is empty");
  std::unordered_set<std::string> ids;
  while (reader.next(line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    const auto where = "catalog " + at_line(reader.number());
    if (f.size() != 7) throw Error(ErrorCode::MalformedRow, where + ": expected 7 fields");
    CatalogEntry e;
    e.id = std::string(f[0]);
    if (e.id.empty()) throw Error(ErrorCode::MalformedRow, where + ": empty id");
    const auto cls = parse_s_class(f[1]);
    if (!cls) throw Error(ErrorCode::MalformedRow, where + ": bad s_class '" + std::string(f[1]) + "'");
    e.s_class = *cls;
    const auto peak = parse_instant(f[2]);
    if (!peak) throw Error(ErrorCode::MalformedRow, where + ": bad flare_peak");
    e.flare_peak = *peak;
    if (!f[3].empty()) {
      e.onset = parse_instant(f[3]);
      if (!e.onset) throw Error(ErrorCode::MalformedRow, where + ": bad onset");
    }
    if (!f[4].empty()) {
      e.end = parse_instant(f[4]);
      if (!e.end) throw Error(ErrorCode::MalformedRow, where + ": bad end");
    }
    e.proton_file = std::string(f[5]);
    if (e.proton_file.empty()) throw Error(ErrorCode::MalformedRow, where + ": empty proton_file");
    e.xray_file = std::string(f[6]);
    if (!ids.insert(e.id).second) throw Error(ErrorCode::DuplicateId, where + ": duplicate id " + e.id);
    catalog.entries.push_back(std::move(e));
  }
  return catalog;
}

std::string write_catalog_csv(const EventCatalog& catalog) {
  std::string out = "id,s_class,flare_peak,onset,end,proton_file,xray_file\n";
  for (const auto& e : catalog.entries) {
    out += e.id + ',' + std::string(to_string(e.s_class)) + ',' + format_instant(e.flare_peak) + ',';
    out += (e.onset ? format_instant(*e.onset) : "") + ',';
    out += (e.end ? format_instant(*e.end) : "") + ',';
    out += e.proton_file + ',' + e.xray_file + '\n';
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EventRecord load_event_files(const CatalogEntry& entry, const std::filesystem::path& base_dir,
                             std::size_t margin, std::size_t max_gap) {
  auto load_channel = [&](const std::string& file, Channel channel) {
    const auto path = base_dir / file;
    try {
      return resample_to_cadence(parse_flux_csv(read_text_file(path), channel), max_gap);
    } catch (const Error& err) {
      const std::string where = entry.id + " (" + path.string() + ")";
      throw Error(err.code(), err.detail().find(path.string()) == std::string::npos ? where + ": " + err.detail()
                                                                                    : entry.id + ": " + err.detail());
    }
  };
  FluxSeries proton = load_channel(entry.proton_file, Channel::proton);
  std::optional<FluxSeries> xray;
  if (!entry.xray_file.empty()) xray = load_channel(entry.xray_file, Channel::xray);
  return load_event(entry, std::move(proton), std::move(xray), margin);
}

std::vector<EventRecord> load_catalog(const std::filesystem::path& catalog_path, std::size_t margin,
                                      std::size_t max_gap) {
  const auto catalog = parse_catalog_csv(read_text_file(catalog_path));
  std::vector<EventRecord> events;
  events.reserve(catalog.entries.size());
  for (const auto& entry : catalog.entries)
    events.push_back(load_event_files(entry, catalog_path.parent_path(), margin, max_gap));
  return events;
}

}  // namespace protoncast
