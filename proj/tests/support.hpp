#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "protoncast/catalog.hpp"
#include "protoncast/rng.hpp"
#include "protoncast/tensor.hpp"

namespace testing {

using namespace protoncast;

inline Instant t0() { return Instant{std::chrono::sys_days{std::chrono::year{2011} / 3 / 8}}; }

inline FluxSeries proton_series(std::vector<double> v, Instant start = t0()) {
  return FluxSeries(Channel::proton, start, std::move(v));
}

// Background, a block of `event_len` samples at `level` pfu, background again.
inline std::vector<double> plateau(std::size_t before, std::size_t event_len, std::size_t after, double level = 50.0,
                                   double background = 1.0) {
  std::vector<double> v(before, background);
  v.insert(v.end(), event_len, level);
  v.insert(v.end(), after, background);
  return v;
}

// Smooth rise-and-decay event with the given margins; values stay above 10 pfu
// for exactly `event_len` samples.
inline std::vector<double> bump(std::size_t before, std::size_t event_len, std::size_t after, double peak = 500.0) {
  std::vector<double> v(before, 0.5);
  for (std::size_t i = 0; i < event_len; ++i) {
    const double x = (static_cast<double>(i) + 0.5) / static_cast<double>(event_len);
    v.push_back(10.0 + (peak - 10.0) * std::sin(M_PI * x));
  }
  v.insert(v.end(), after, 0.5);
  return v;
}

inline EventRecord make_event(const std::string& id, std::vector<double> proton, bool with_xray = false,
                              SClass c = SClass::S1, std::size_t margin = kDefaultMargin) {
  std::optional<FluxSeries> xray;
  if (with_xray) {
    std::vector<double> xv(proton.size());
    for (std::size_t i = 0; i < xv.size(); ++i) xv[i] = 1e-7 * (1.0 + 0.01 * static_cast<double>(i % 17));
    xray = FluxSeries(Channel::xray, t0(), std::move(xv));
  }
  CatalogEntry entry{id, c, t0(), std::nullopt, std::nullopt, "", ""};
  return load_event(entry, proton_series(std::move(proton)), std::move(xray), margin);
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = scale * rng.normal();
  return t;
}

// Central difference of a scalar function of one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("protoncast_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
