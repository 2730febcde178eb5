#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "protoncast/error.hpp"
#include "protoncast/preprocess.hpp"
#include "support.hpp"

using namespace protoncast;
using namespace testing;

namespace {

// Direct transcription of the truncated centered mean, used as an oracle.
std::vector<double> naive_smooth(const std::vector<double>& v, std::size_t h) {
  std::vector<double> out(v.size());
  for (std::size_t t = 0; t < v.size(); ++t) {
    const std::size_t lo = t >= h ? t - h : 0;
    const std::size_t hi = std::min(v.size() - 1, t + h);
    double s = 0;
    for (std::size_t i = lo; i <= hi; ++i) s += v[i];
    out[t] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

std::vector<std::pair<std::string, SClass>> census(std::size_t s1, std::size_t s2, std::size_t s3, std::size_t s4) {
  std::vector<std::pair<std::string, SClass>> out;
  auto add = [&](std::size_t n, SClass c, const char* tag) {
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(std::string(tag) + std::to_string(i), c);
  };
  add(s1, SClass::S1, "a");
  add(s2, SClass::S2, "b");
  add(s3, SClass::S3, "c");
  add(s4, SClass::S4, "d");
  return out;
}

}  // namespace

TEST_CASE("normalize_xray") {
  const FluxSeries x(Channel::xray, t0(), {7e-6, 7e-8});
  const auto n = normalize_xray(x);
  CHECK(n[0] == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(n[1] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(normalize_xray(proton_series({1.0})), Error);
  try {
    normalize_xray(proton_series({1.0}));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::WrongChannel);
  }
}

TEST_CASE("log_transform") {
  const std::vector<double> v{10.0, 1.0, 1e-5};
  const auto l = log_transform(v, 1e-3);
  CHECK(l[0] == 1.0);
  CHECK(l[1] == 0.0);
  CHECK(l[2] == doctest::Approx(-3.0).epsilon(1e-15));
}

TEST_CASE("trend_smooth") {
  SUBCASE("constant series is a fixed point") {
    const std::vector<double> v(40, 2.75);
    for (double x : trend_smooth(v, 6)) CHECK(std::abs(x - 2.75) < 1e-12);
  }
  SUBCASE("interior of a linear ramp is a fixed point") {
    std::vector<double> v(50);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.3 * static_cast<double>(i) - 4.0;
    const auto s = trend_smooth(v, 6);
    for (std::size_t i = 6; i + 6 < v.size(); ++i) CHECK(std::abs(s[i] - v[i]) < 1e-12);
  }
  SUBCASE("impulse of 13 gives 1 at the center") {
    std::vector<double> v(41, 0.0);
    v[20] = 13.0;
    const auto s = trend_smooth(v, 6);
    CHECK(std::abs(s[20] - 1.0) < 1e-12);
    CHECK(std::abs(s[14] - 1.0) < 1e-12);
    CHECK(s[13] == 0.0);
  }
  SUBCASE("matches the naive oracle including edges") {
    Rng rng(3);
    for (std::size_t h : {0u, 1u, 6u, 30u}) {
      const auto v = random_vector(rng, 25);
      const auto s = trend_smooth(v, h);
      const auto o = naive_smooth(v, h);
      for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(s[i] - o[i]) < 1e-12);
    }
  }
  SUBCASE("linear in its input") {
    Rng rng(4);
    const auto a = random_vector(rng, 60);
    const auto b = random_vector(rng, 60);
    std::vector<double> combo(60);
    for (std::size_t i = 0; i < 60; ++i) combo[i] = 2.5 * a[i] - b[i] + 7.0;
    const auto sa = trend_smooth(a, 6), sb = trend_smooth(b, 6), sc = trend_smooth(combo, 6);
    for (std::size_t i = 0; i < 60; ++i) CHECK(std::abs(sc[i] - (2.5 * sa[i] - sb[i] + 7.0)) < 1e-12);
  }
  SUBCASE("sum preserved when the series ends in constant runs") {
    // With 2h constant samples at each end every truncated edge window averages
    // the same constant, so the smoothed series keeps the total.
    Rng rng(5);
    const std::size_t h = 6;
    const auto core = random_vector(rng, 30);
    std::vector<double> padded(2 * h, 0.0);
    padded.insert(padded.end(), core.begin(), core.end());
    padded.insert(padded.end(), 2 * h, 0.0);
    const auto s = trend_smooth(padded, h);
    CHECK(std::abs(std::accumulate(padded.begin(), padded.end(), 0.0) - std::accumulate(s.begin(), s.end(), 0.0)) <
          1e-9);
  }
}

TEST_CASE("make_windows") {
  PreprocessSpec spec;
  SUBCASE("end - onset = 287 gives 288 samples") {
    const auto e = make_event("E", bump(288, 288, 288));
    CHECK(e.end_index() - e.onset_index() == 287);
    const auto w = make_windows(e, spec);
    CHECK(w.size() == 288);
    CHECK(w.front().center == e.onset);
    CHECK(w.back().center == e.end);
  }
  SUBCASE("margins of 287 are rejected") {
    const auto e = make_event("E", bump(287, 30, 300), false, SClass::S1, 0);
    try {
      make_windows(e, spec);
      FAIL("no error");
    } catch (const Error& err) {
      CHECK(err.code() == ErrorCode::InsufficientContext);
    }
    const auto e2 = make_event("E", bump(300, 30, 287), false, SClass::S1, 0);
    CHECK_THROWS_AS(make_windows(e2, spec), Error);
  }
  SUBCASE("window geometry") {
    const auto e = make_event("E", bump(300, 40, 300), true);
    spec.features = Features::P_XR;
    const auto prepared = prepare_channels(e, spec);
    const auto w = make_windows(e, spec);
    REQUIRE(w.size() == 40);
    for (const auto& s : w) {
      CHECK(s.input.shape() == std::vector<std::size_t>{288, 2});
      CHECK(s.target.size() == 288);
      const auto c = *e.proton.index_of(s.center);
      CHECK(s.last_proton() == prepared.proton[c]);
      CHECK(s.input.at(0, 0) == prepared.proton[c - 287]);
      CHECK(s.input.at(287, 1) == prepared.xray[c]);
      CHECK(s.target.front() == prepared.proton[c + 1]);
      CHECK(s.target.back() == prepared.proton[c + 288]);
    }
  }
  SUBCASE("X-ray is rescaled before the log") {
    const auto e = make_event("E", bump(300, 10, 300), true);
    spec.features = Features::P_XR;
    const auto prepared = prepare_channels(e, spec);
    CHECK(prepared.xray[0] == doctest::Approx(std::log10(1e-7 / 0.7 * 1e7)).epsilon(1e-12));
  }
  SUBCASE("P+XR without an X-ray channel") {
    const auto e = make_event("E", bump(300, 10, 300));
    spec.features = Features::P_XR;
    CHECK_THROWS_AS(make_windows(e, spec), Error);
  }
  SUBCASE("trend variant on a constant log-proton series") {
    // Constant 20 pfu except the margins, which must be < 10 for detection; use
    // a long event so every target lies inside it.
    auto v = plateau(600, 1200, 600, 20.0, 1.0);
    const auto e = make_event("E", v);
    spec.variant = Variant::trend;
    const auto w = make_windows(e, spec);
    const double level = std::log10(20.0);
    for (std::size_t i = 300; i < 600; ++i)
      for (double t : w[i].target) CHECK(std::abs(t - level) < 1e-12);
  }
  SUBCASE("count formula on shortened windows") {
    spec.input_len = 48;
    spec.output_len = 48;
    for (std::size_t len : {1u, 2u, 17u, 100u}) {
      const auto e = make_event("E", bump(60, len, 60), false, SClass::S1, 48);
      CHECK(make_windows(e, spec).size() == len);
    }
  }
}

TEST_CASE("window_at allows a partial target and rejects short history") {
  const auto e = make_event("E", bump(300, 10, 300));
  PreprocessSpec spec;
  const auto prepared = prepare_channels(e, spec);
  const auto last = e.proton.size() - 1;
  CHECK(window_at(e, prepared, spec, last).target.empty());
  CHECK(window_at(e, prepared, spec, last - 5).target.size() == 5);
  CHECK(window_at(e, prepared, spec, 287).input.rows() == 288);
  CHECK_THROWS_AS(window_at(e, prepared, spec, 286), Error);
}

TEST_CASE("stratified_folds") {
  SUBCASE("census of 20/12/6/2 over 100 seeds") {
    const auto events = census(20, 12, 6, 2);
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto plan = stratified_folds(events, 4, seed);
      std::array<std::array<int, 3>, 4> counts{};
      std::set<std::size_t> s4_folds;
      for (const auto& [id, c] : events) {
        const auto f = plan.assignment.at(id);
        ++counts[f][static_cast<int>(stratum_of(c))];
        if (c == SClass::S4) s4_folds.insert(f);
      }
      for (const auto& fold : counts) {
        CHECK(fold[0] == 5);
        CHECK(fold[1] == 3);
        CHECK(fold[2] == 2);
      }
      CHECK(s4_folds.size() == 2);
    }
  }
  SUBCASE("eight S1 events, k = 4") {
    const auto plan = stratified_folds(census(8, 0, 0, 0), 4, 1);
    for (std::size_t f = 0; f < 4; ++f) CHECK(plan.test_ids(f).size() == 2);
  }
  SUBCASE("partition, balance and determinism on uneven strata") {
    const auto events = census(7, 5, 3, 1);
    const auto a = stratified_folds(events, 4, 9);
    const auto b = stratified_folds(events, 4, 9);
    CHECK(a.assignment == b.assignment);
    CHECK(a.assignment.size() == events.size());
    std::size_t total = 0;
    for (std::size_t f = 0; f < 4; ++f) {
      total += a.test_ids(f).size();
      CHECK(a.test_ids(f).size() + a.train_ids(f).size() == events.size());
    }
    CHECK(total == events.size());
    std::array<std::array<int, 3>, 4> counts{};
    for (const auto& [id, c] : events) ++counts[a.assignment.at(id)][static_cast<int>(stratum_of(c))];
    for (int s = 0; s < 3; ++s) {
      int lo = 1 << 20, hi = 0;
      for (const auto& fold : counts) {
        lo = std::min(lo, fold[s]);
        hi = std::max(hi, fold[s]);
      }
      CHECK(hi - lo <= 1);
    }
  }
  SUBCASE("different seeds give different plans") {
    const auto events = census(20, 12, 6, 2);
    CHECK(stratified_folds(events, 4, 1).assignment != stratified_folds(events, 4, 2).assignment);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(stratified_folds(census(3, 0, 0, 0), 4, 0), Error);
    CHECK_THROWS_AS(stratified_folds(census(8, 0, 0, 0), 1, 0), Error);
    try {
      stratified_folds(census(3, 0, 0, 0), 4, 0);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TooFewEvents);
    }
  }
}

TEST_CASE("sample store round-trip") {
  const auto e = make_event("E7", bump(300, 12, 300), true);
  PreprocessSpec spec;
  spec.features = Features::P_XR;
  spec.variant = Variant::trend;
  const auto w = make_windows(e, spec);
  const auto dir = temp_dir("samples");
  write_sample_store(dir, "E7", w, spec);
  PreprocessSpec back_spec;
  const auto back = read_sample_store(dir, "E7", &back_spec);
  REQUIRE(back.size() == w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(back[i].input == w[i].input);
    CHECK(back[i].target == w[i].target);
    CHECK(back[i].center == w[i].center);
    CHECK(back[i].event_id == "E7");
  }
  CHECK(back_spec.features == Features::P_XR);
  CHECK(back_spec.variant == Variant::trend);
}
