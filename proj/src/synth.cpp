#include "protoncast/synth.hpp"

#include <cmath>
#include <cstdio>

#include "protoncast/error.hpp"
#include "protoncast/io.hpp"
#include "protoncast/rng.hpp"

namespace protoncast {

namespace {

constexpr double kStep = static_cast<double>(kCadence.count());

double mode_x(double k) { return std::pow((k - 1.0) / k, 1.0 / k); }

// Scaled shape: 1 at the maximizer, 0 at and before onset.
double unit_profile(double seconds_after_onset, double tau, double k) {
  if (seconds_after_onset <= 0.0) return 0.0;
  return weibull_shape(seconds_after_onset / tau, k) / weibull_shape(mode_x(k), k);
}

double xray_tau(const SynthProfileParams& p) { return p.rise_scale.count() * p.xray_compression; }

struct PeakDecade {
  double lo;
  double hi;
};

PeakDecade decade_of(SClass c) {
  switch (c) {
    case SClass::S1: return {1e1, 1e2};
    case SClass::S2: return {1e2, 1e3};
    case SClass::S3: return {1e3, 1e4};
    case SClass::S4: return {1e4, 1e5};
  }
  return {1e1, 1e2};
}

// Length (samples) of the noiseless above-threshold run.
std::size_t noiseless_span(const SynthProfileParams& p, std::size_t n) {
  const double lead = static_cast<double>(p.lead_in.count());
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (noiseless_proton(p, static_cast<double>(i) * kStep - lead) >= kEventThreshold) ++count;
  return count;
}

std::string event_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "SYN%03zu", index + 1);
  return buf;
}

}  // namespace

void SynthProfileParams::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidParams, what); };
  if (!(peak > kEventThreshold) || !std::isfinite(peak)) fail("peak must exceed 10 pfu, got " + std::to_string(peak));
  if (!(shape > 1.0) || !std::isfinite(shape)) fail("shape must exceed 1, got " + std::to_string(shape));
  if (!(rise_scale.count() > 0.0) || !std::isfinite(rise_scale.count())) fail("rise scale must be positive");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise sigma must be nonnegative");
  if (!(background > 0.0) || !(background < peak)) fail("background must lie in (0, peak)");
  if (lead_in.count() < 0 || lead_in.count() % kCadence.count() != 0)
    fail("lead-in must be a nonnegative whole number of cadence steps");
  if (duration.count() < 0) fail("duration must be nonnegative");
  if (!(xray_background > 0.0) || !(xray_peak > xray_background)) fail("xray peak must exceed a positive background");
  if (!(xray_compression > 0.0)) fail("xray compression must be positive");
}

double weibull_shape(double x, double k) {
  if (x <= 0.0) return 0.0;
  return std::pow(x, k - 1.0) * std::exp(-std::pow(x, k));
}

double peak_offset_seconds(const SynthProfileParams& p) { return p.rise_scale.count() * mode_x(p.shape); }

double noiseless_proton(const SynthProfileParams& p, double seconds_after_onset) {
  return p.background + (p.peak - p.background) * unit_profile(seconds_after_onset, p.rise_scale.count(), p.shape);
}

std::chrono::seconds default_duration(const SynthProfileParams& p) {
  p.validate();
  const double t_peak = peak_offset_seconds(p);
  double t = 0.0;
  while (t <= t_peak || noiseless_proton(p, t) >= kEventThreshold / 2) t += kStep;
  const auto steps = static_cast<long>(t / kStep) + 1;
  return p.lead_in * 2 + kCadence * steps;
}

SynthProfile synth_profile(const SynthProfileParams& p, std::uint64_t seed) {
  p.validate();
  const auto duration = p.duration.count() > 0 ? p.duration : default_duration(p);
  const auto n = static_cast<std::size_t>(duration / kCadence);
  if (n == 0) throw Error(ErrorCode::InvalidParams, "duration shorter than one cadence step");

  Rng lead_rng(Rng::derive(seed, 0));
  const double lead_seconds = static_cast<double>(12 + lead_rng.below(37)) * kStep;  // 1–4 h
  const double xray_peak_at = peak_offset_seconds(p) - lead_seconds;
  const double xtau = xray_tau(p);
  const double xray_onset = xray_peak_at - xtau * mode_x(p.shape);

  Rng proton_noise(Rng::derive(seed, 1));
  Rng xray_noise(Rng::derive(seed, 2));
  const double lead = static_cast<double>(p.lead_in.count());
  std::vector<double> proton(n), xray(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = static_cast<double>(i) * kStep - lead;
    const double xs = p.xray_background + (p.xray_peak - p.xray_background) * unit_profile(s - xray_onset, xtau, p.shape);
    proton[i] = noiseless_proton(p, s) * std::pow(10.0, p.noise_sigma * proton_noise.normal());
    xray[i] = xs * std::pow(10.0, p.noise_sigma * xray_noise.normal());
  }

  const Instant start = p.onset_time - p.lead_in;
  const auto flare_offset = static_cast<long>(std::llround(xray_peak_at / kStep));
  return {FluxSeries(Channel::proton, start, std::move(proton)), FluxSeries(Channel::xray, start, std::move(xray)),
          p.onset_time + kCadence * flare_offset};
}

std::vector<EventRecord> synth_event_set(std::size_t n, const ClassMix& mix, std::uint64_t seed,
                                         const SynthOptions& options) {
  std::size_t total = 0;
  for (const auto& [c, count] : mix) total += count;
  if (total != n)
    throw Error(ErrorCode::InvalidMix,
                "class counts sum to " + std::to_string(total) + " but " + std::to_string(n) + " events requested");
  if (options.max_attempts == 0) throw Error(ErrorCode::InvalidArgument, "max_attempts must be positive");

  std::vector<EventRecord> events;
  events.reserve(n);
  std::size_t index = 0;
  for (const auto& [s_class, count] : mix) {
    for (std::size_t j = 0; j < count; ++j, ++index) {
      const std::string id = event_id(index);
      const PeakDecade decade = decade_of(s_class);
      const auto event_seed = Rng::derive(seed, index);
      std::optional<EventRecord> accepted;
      for (std::size_t attempt = 0; attempt < options.max_attempts && !accepted; ++attempt) {
        Rng rng(Rng::derive(event_seed, attempt));
        SynthProfileParams p;
        p.peak = std::pow(10.0, rng.uniform(std::log10(decade.lo), std::log10(decade.hi)));
        p.shape = rng.uniform(1.6, 3.0);
        // Snap τ so the maximizer falls on the sampling grid.
        const double tau_raw = rng.uniform(8.0, 24.0) * 3600.0;
        const double steps_to_peak = std::max(1.0, std::round(tau_raw * mode_x(p.shape) / kStep));
        p.rise_scale = std::chrono::duration<double>(steps_to_peak * kStep / mode_x(p.shape));
        const int class_index = static_cast<int>(s_class);
        p.xray_peak = std::pow(10.0, rng.uniform(-5.5, -4.5) + 0.5 * class_index);
        p.onset_time = options.first_onset + std::chrono::duration_cast<std::chrono::seconds>(options.spacing) *
                                                 static_cast<long>(index);
        p.onset_time = Instant{p.onset_time.time_since_epoch() / kCadence * kCadence};
        const std::uint64_t noise_seed = rng.next();

        SynthProfile profile = synth_profile(p, noise_seed);
        const std::size_t expected = noiseless_span(p, profile.proton.size());
        CatalogEntry entry{id, s_class, profile.flare_peak, std::nullopt, std::nullopt, "", ""};
        try {
          std::optional<FluxSeries> xray;
          if (options.with_xray) xray = std::move(profile.xray);
          EventRecord record = load_event(entry, std::move(profile.proton), std::move(xray), options.margin);
          const std::size_t span = record.end_index() - record.onset_index() + 1;
          if (2 * span >= expected) accepted = std::move(record);
        } catch (const Error&) {
        }
      }
      if (!accepted)
        throw Error(ErrorCode::InvalidParams,
                    id + ": no valid synthetic profile after " + std::to_string(options.max_attempts) + " attempts");
      events.push_back(std::move(*accepted));
    }
  }
  return events;
}

void write_synth_dataset(const std::filesystem::path& dir, const std::vector<EventRecord>& events) {
  std::filesystem::create_directories(dir / "flux");
  EventCatalog catalog;
  for (const auto& e : events) {
    CatalogEntry entry{e.id, e.s_class, e.flare_peak, e.onset, e.end, "flux/" + e.id + "_proton.csv", ""};
    write_file_atomic(dir / entry.proton_file, write_flux_csv(e.proton));
    if (e.xray) {
      entry.xray_file = "flux/" + e.id + "_xray.csv";
      write_file_atomic(dir / entry.xray_file, write_flux_csv(*e.xray));
    }
    catalog.entries.push_back(std::move(entry));
  }
  write_file_atomic(dir / "catalog.csv", write_catalog_csv(catalog));
}

}  // namespace protoncast
