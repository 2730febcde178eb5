#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "protoncast/catalog.hpp"

namespace protoncast {

// Rise-then-decay proton profile built on the Weibull density
//   w(t) = x^(k−1)·exp(−x^k),  x = (t − t0)/τ,
// scaled so the noiseless maximum at t* = t0 + τ((k−1)/k)^(1/k) equals `peak`.
struct SynthProfileParams {
  double peak = 100.0;  // pfu
  std::chrono::duration<double> rise_scale{std::chrono::hours(12)};
  double shape = 2.0;
  Instant onset_time{};
  double background = 0.1;
  double noise_sigma = 0.05;  // log10 units
  // Series length; zero derives it from the profile (see default_duration).
  std::chrono::seconds duration{0};
  // Quiet context before onset_time. Must be a whole number of cadence steps.
  std::chrono::seconds lead_in = kCadence * 348;

  double xray_peak = 1e-4;  // W/m²
  double xray_background = 1e-7;
  double xray_compression = 0.25;  // X-ray τ as a fraction of the proton τ

  void validate() const;
};

double weibull_shape(double x, double k);

// Offset of the analytic maximizer from onset_time, in seconds.
double peak_offset_seconds(const SynthProfileParams& p);

double noiseless_proton(const SynthProfileParams& p, double seconds_after_onset);

// lead_in + span until the noiseless profile falls below half the event threshold + lead_in.
std::chrono::seconds default_duration(const SynthProfileParams& p);

struct SynthProfile {
  FluxSeries proton;
  FluxSeries xray;
  Instant flare_peak{};
};

// Noise and the X-ray lead (1–4 h) are drawn from `seed`.
SynthProfile synth_profile(const SynthProfileParams& p, std::uint64_t seed);

struct SynthOptions {
  bool with_xray = true;
  std::size_t margin = kDefaultMargin;
  Instant first_onset = std::chrono::sys_days{std::chrono::year{2020} / 1 / 1};
  std::chrono::seconds spacing = std::chrono::days(30);
  std::size_t max_attempts = 64;
};

using ClassMix = std::map<SClass, std::size_t>;

// Peak flux is log-uniform inside the class decade (S1 10–100 pfu ... S4 1e4–1e5).
std::vector<EventRecord> synth_event_set(std::size_t n, const ClassMix& mix, std::uint64_t seed,
                                         const SynthOptions& options = {});

// catalog.csv plus flux/<id>_proton.csv and flux/<id>_xray.csv.
void write_synth_dataset(const std::filesystem::path& dir, const std::vector<EventRecord>& events);

}  // namespace protoncast
