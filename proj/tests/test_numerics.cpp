#include <doctest.h>

#include <cmath>
#include <functional>

#include "protoncast/adam.hpp"
#include "protoncast/error.hpp"
#include "protoncast/gradcheck.hpp"
#include "protoncast/model_check.hpp"
#include "protoncast/ops.hpp"
#include "protoncast/seq2seq.hpp"
#include "support.hpp"

using namespace protoncast;
using namespace testing;
namespace o = protoncast::ops;

namespace {

using Vector = std::vector<double>;
// Forward map from a flat input to an output vector.
using Map = std::function<Vector(const Vector&)>;

// Checks an analytic input adjoint against central differences of wᵀ·f(x).
void check_adjoint(const Map& f, const Vector& x, const Vector& w, const Vector& analytic, double tol = 1e-5) {
  REQUIRE(analytic.size() == x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto g = [&](double xi) {
      Vector y = x;
      y[i] = xi;
      return o::dot(f(y), w);
    };
    const double numeric = central_diff(g, x[i]);
    INFO("index " << i << " analytic " << analytic[i] << " numeric " << numeric);
    CHECK((rel_err(analytic[i], numeric) < tol || std::abs(analytic[i] - numeric) < 1e-10));
  }
}

Vector sub(const Vector& v, std::size_t off, std::size_t n) { return Vector(v.begin() + off, v.begin() + off + n); }

}  // namespace

TEST_CASE("tensor and parameter store") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  t.at(1, 2) = 4.0;
  CHECK(t[5] == 4.0);
  CHECK(t.row(1)[2] == 4.0);
  CHECK_THROWS_AS(Tensor({2, 2}, Vector{1, 2, 3}), Error);
  CHECK(t.all_finite());
  t[0] = NAN;
  CHECK_FALSE(t.all_finite());
  CHECK(shape_string({3, 4}) == "[3x4]");

  ParameterStore p;
  p.add("b", Tensor({2}));
  p.add("a", Tensor({1, 2}, 3.0));
  CHECK_THROWS_AS(p.add("a", Tensor({1})), Error);
  CHECK(p.begin()->first == "a");
  CHECK(p.total_size() == 4);
  CHECK_THROWS_AS(p.assign("a", Tensor({2, 1})), Error);
  CHECK_THROWS_AS(p.at("missing"), Error);
  const auto z = p.zeros_like();
  CHECK(z.at("a").shape() == p.at("a").shape());
  CHECK(z.at("a")[0] == 0.0);
  ParameterStore q;
  q.add("a", Tensor({1, 2}));
  CHECK_THROWS_AS(p.require_same_layout(q), Error);
}

TEST_CASE("primitive forward values") {
  Vector y(3);
  o::softmax(Vector{0, 0, 0}, y);
  for (double v : y) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(o::sigmoid(0.0) == 0.5);
  o::tanh(Vector{0, 0, 0}, y);
  for (double v : y) CHECK(v == 0.0);
  o::softmax(Vector{1000, 0, -1000}, y);
  CHECK(y[0] == doctest::Approx(1.0));
  CHECK(std::isfinite(y[2]));

  const Tensor a({2, 3}, Vector{1, 2, 3, 4, 5, 6});
  Vector ax(2);
  o::matvec(a.view(), Vector{1, 0, -1}, ax);
  CHECK(ax == Vector{-2, -2});
  const Tensor b({3, 2}, Vector{1, 0, 0, 1, 1, 1});
  Tensor c({2, 2});
  o::matmul(a.view(), b.view(), c.view());
  CHECK(c.values() == Vector{4, 5, 10, 11});
  o::matmul(a.view(), b.view(), c.view(), true);
  CHECK(c.values() == Vector{8, 10, 20, 22});
  CHECK_THROWS_AS(o::matmul(a.view(), a.view(), c.view()), Error);
  CHECK_THROWS_AS(o::matvec(a.view(), Vector{1, 2}, ax), Error);

  Vector cat(5);
  o::concat({Vector{1, 2}, Vector{3}, Vector{4, 5}}, cat);
  CHECK(cat == Vector{1, 2, 3, 4, 5});
  Vector s(2);
  o::slice(cat, 2, s);
  CHECK(s == Vector{3, 4});
  CHECK_THROWS_AS(o::slice(cat, 4, s), Error);
  CHECK(o::mean_square(Vector{1, 2, 3}) == doctest::Approx(14.0 / 3));
  Vector sum(2);
  CHECK_THROWS_AS(o::add(Vector{1, 2}, Vector{1}, sum), Error);
}

TEST_CASE("softmax is a distribution") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = random_vector(rng, 1 + rng.below(40), 10.0);
    Vector y(x.size());
    o::softmax(x, y);
    double total = 0;
    for (double v : y) {
      CHECK(v >= 0.0);
      total += v;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("mse loss") {
  CHECK(o::mse_loss(Vector{0, 2}, Vector{1, 0}) == 2.5);
  CHECK(o::mse_loss(Vector{1, 2, 3}, Vector{1, 2, 3}) == 0.0);
  CHECK(o::mse_loss(Vector{1.5, 2.5, 3.5}, Vector{1, 2, 3}) == 0.25);
  CHECK_THROWS_AS(o::mse_loss(Vector{1}, Vector{1, 2}), Error);
  CHECK_THROWS_AS(o::mse_loss(Vector{}, Vector{}), Error);
}

TEST_CASE("primitive adjoints match finite differences") {
  Rng rng(17);
  SUBCASE("matvec") {
    const Tensor a = random_tensor(rng, {3, 3});
    const auto x = random_vector(rng, 3), w = random_vector(rng, 3);
    Tensor a_bar({3, 3});
    Vector x_bar(3, 0.0);
    o::matvec_backward(a.view(), x, w, a_bar.view(), x_bar);
    // The input adjoint is Aᵀ·ȳ.
    for (std::size_t j = 0; j < 3; ++j) {
      double expect = 0;
      for (std::size_t i = 0; i < 3; ++i) expect += a.at(i, j) * w[i];
      CHECK(x_bar[j] == doctest::Approx(expect).epsilon(1e-14));
    }
    check_adjoint(
        [&](const Vector& v) {
          Vector y(3);
          o::matvec(a.view(), v, y);
          return y;
        },
        x, w, x_bar);
    check_adjoint(
        [&](const Vector& v) {
          Vector y(3);
          o::matvec(MatrixRef{v.data(), 3, 3}, x, y);
          return y;
        },
        a.values(), w, a_bar.values());
  }
  SUBCASE("matmul") {
    const Tensor a = random_tensor(rng, {2, 4}), b = random_tensor(rng, {4, 3});
    const auto w = random_vector(rng, 6);
    Tensor a_bar({2, 4}), b_bar({4, 3});
    o::matmul_backward(a.view(), b.view(), MatrixRef{w.data(), 2, 3}, a_bar.view(), b_bar.view());
    auto run = [](const Vector& av, const Vector& bv) {
      Vector c(6);
      o::matmul(MatrixRef{av.data(), 2, 4}, MatrixRef{bv.data(), 4, 3}, MutMatrixRef{c.data(), 2, 3});
      return c;
    };
    check_adjoint([&](const Vector& v) { return run(v, b.values()); }, a.values(), w, a_bar.values());
    check_adjoint([&](const Vector& v) { return run(a.values(), v); }, b.values(), w, b_bar.values());
  }
  SUBCASE("add and mul") {
    const auto x = random_vector(rng, 8), w = random_vector(rng, 4);
    Vector xa(8, 0.0), xm(8, 0.0);
    o::add_backward(w, std::span<double>(xa).first(4), std::span<double>(xa).last(4));
    o::mul_backward(sub(x, 0, 4), sub(x, 4, 4), w, std::span<double>(xm).first(4), std::span<double>(xm).last(4));
    check_adjoint(
        [](const Vector& v) {
          Vector y(4);
          o::add(sub(v, 0, 4), sub(v, 4, 4), y);
          return y;
        },
        x, w, xa);
    check_adjoint(
        [](const Vector& v) {
          Vector y(4);
          o::mul(sub(v, 0, 4), sub(v, 4, 4), y);
          return y;
        },
        x, w, xm);
  }
  SUBCASE("activations and softmax") {
    const auto x = random_vector(rng, 6, 2.0), w = random_vector(rng, 6);
    using Fwd = void (*)(o::CVec, o::Vec);
    using Bwd = void (*)(o::CVec, o::CVec, o::Vec);
    for (auto [fwd, bwd] : {std::pair<Fwd, Bwd>{o::sigmoid, o::sigmoid_backward},
                            std::pair<Fwd, Bwd>{o::tanh, o::tanh_backward},
                            std::pair<Fwd, Bwd>{o::softmax, o::softmax_backward}}) {
      auto f = [fwd](const Vector& v) {
        Vector y(v.size());
        fwd(v, y);
        return y;
      };
      Vector x_bar(6, 0.0);
      bwd(f(x), w, x_bar);
      check_adjoint(f, x, w, x_bar);
    }
  }
  SUBCASE("concat and slice") {
    const auto x = random_vector(rng, 7), w = random_vector(rng, 7), ws = random_vector(rng, 3);
    Vector x_bar(7, 0.0);
    o::concat_backward(w, {std::span<double>(x_bar).first(2), std::span<double>(x_bar).subspan(2, 4),
                           std::span<double>(x_bar).last(1)});
    check_adjoint(
        [](const Vector& v) {
          Vector y(7);
          o::concat({sub(v, 0, 2), sub(v, 2, 4), sub(v, 6, 1)}, y);
          return y;
        },
        x, w, x_bar);
    Vector s_bar(7, 0.0);
    o::slice_backward(ws, 3, s_bar);
    check_adjoint(
        [](const Vector& v) {
          Vector y(3);
          o::slice(v, 3, y);
          return y;
        },
        x, ws, s_bar);
  }
  SUBCASE("reductions") {
    const auto x = random_vector(rng, 5), obs = random_vector(rng, 5);
    Vector ms_bar(5, 0.0), mse_bar(5, 0.0);
    o::mean_square_backward(x, 0.7, ms_bar);
    o::mse_loss_backward(x, obs, 0.7, mse_bar);
    check_adjoint([](const Vector& v) { return Vector{o::mean_square(v)}; }, x, {0.7}, ms_bar);
    check_adjoint([&](const Vector& v) { return Vector{o::mse_loss(v, obs)}; }, x, {0.7}, mse_bar);
  }
  SUBCASE("backward accumulates") {
    const auto x = random_vector(rng, 4), w = random_vector(rng, 4);
    Vector once(4, 0.0), twice(4, 0.0);
    o::tanh_backward(x, w, once);
    o::tanh_backward(x, w, twice);
    o::tanh_backward(x, w, twice);
    for (std::size_t i = 0; i < 4; ++i) CHECK(twice[i] == 2 * once[i]);
  }
}

namespace {

ParameterStore scalar_store(double v) {
  ParameterStore p;
  p.add("x", Tensor({1}, v));
  return p;
}

// Standard Adam written out for one scalar.
struct ScalarAdam {
  double m = 0, v = 0, lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  int t = 0;
  double step(double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    return -lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST_CASE("adam") {
  SUBCASE("zero gradient is the identity for any state") {
    Rng rng(5);
    ParameterStore p;
    p.add("a", random_tensor(rng, {3, 2}));
    p.add("b", random_tensor(rng, {4}));
    AdamState state = AdamState::for_params(p);
    for (int i = 0; i < 7; ++i) {
      ParameterStore g = p.zeros_like();
      for (auto& [name, t] : g)
        for (double& v : t.data()) v = rng.normal();
      adam_step(p, g, state);
    }
    const ParameterStore before = p;
    adam_step(p, p.zeros_like(), state);
    CHECK(p == before);
    CHECK(state.step == 8);
  }
  SUBCASE("first step closed form") {
    for (double g : {1.0, -0.37, 25.0, 3e-3, -1e-6}) {
      ParameterStore p = scalar_store(0.5);
      AdamState s = AdamState::for_params(p);
      adam_step(p, scalar_store(g), s);
      const double delta = p.at("x")[0] - 0.5;
      // m̂ = g and v̂ = g² at t = 1.
      const double exact = -1e-3 * g / (std::abs(g) + 1e-8);
      CHECK(std::abs(delta - exact) < 1e-15);
      CHECK(std::abs(delta + 1e-3 * (g > 0 ? 1 : -1)) <= 1e-3 * 1e-8 / std::abs(g) + 1e-16);
      if (std::abs(g) >= 0.1) {
        const double alt = -1e-3 * g / (std::abs(g) + 1e-8 / std::sqrt(1 - 0.999) * (1 - 0.9));
        CHECK(std::abs(delta - alt) < 1e-9);
      }
      CHECK(s.step == 1);
    }
  }
  SUBCASE("two steps with the same gradient") {
    ParameterStore p = scalar_store(0.0);
    AdamState s = AdamState::for_params(p);
    adam_step(p, scalar_store(2.0), s);
    const double first = p.at("x")[0];
    adam_step(p, scalar_store(2.0), s);
    const double second = p.at("x")[0] - first;
    CHECK(first == doctest::Approx(-1e-3).epsilon(1e-8));
    CHECK(second == doctest::Approx(-1e-3).epsilon(1e-8));
  }
  SUBCASE("matches a scalar reference over a gradient sequence") {
    Rng rng(6);
    ParameterStore p = scalar_store(0.0);
    AdamState s = AdamState::for_params(p, {2e-3, 0.8, 0.99, 1e-7});
    ScalarAdam ref{.lr = 2e-3, .b1 = 0.8, .b2 = 0.99, .eps = 1e-7};
    double x = 0;
    for (int i = 0; i < 50; ++i) {
      const double g = rng.normal();
      adam_step(p, scalar_store(g), s);
      x += ref.step(g);
      CHECK(std::abs(p.at("x")[0] - x) < 1e-14);
    }
  }
  SUBCASE("layout mismatch") {
    ParameterStore p = scalar_store(0.0);
    AdamState s = AdamState::for_params(p);
    ParameterStore g;
    g.add("y", Tensor({1}));
    CHECK_THROWS_AS(adam_step(p, g, s), Error);
  }
}

TEST_CASE("gradient clipping") {
  ParameterStore g;
  g.add("a", Tensor({2}, Vector{3, 0}));
  g.add("b", Tensor({1}, Vector{4}));
  CHECK(global_norm(g) == 5.0);
  ParameterStore kept = g;
  CHECK(clip_by_global_norm(kept, 10.0) == 5.0);
  CHECK(kept == g);
  CHECK(clip_by_global_norm(g, 1.0) == 5.0);
  CHECK(g.at("a")[0] == doctest::Approx(0.6));
  CHECK(g.at("b")[0] == doctest::Approx(0.8));
  CHECK(global_norm(g) == doctest::Approx(1.0));
}

TEST_CASE("grad_check harness") {
  Rng rng(23);
  SUBCASE("linear least squares") {
    const std::size_t n = 20, d = 5;
    const Tensor X = random_tensor(rng, {n, d});
    const auto y = random_vector(rng, n);
    ParameterStore p;
    p.add("w", random_tensor(rng, {d}));
    LossFunction loss = [&](const ParameterStore& q, ParameterStore* g) {
      Vector r(n);
      o::matvec(X.view(), q.at("w").data(), r);
      for (std::size_t i = 0; i < n; ++i) r[i] -= y[i];
      if (g) {
        // 2·Xᵀ(Xw − y)/n
        for (std::size_t j = 0; j < d; ++j)
          for (std::size_t i = 0; i < n; ++i) g->at("w")[j] += 2.0 * X.at(i, j) * r[i] / n;
      }
      return o::mean_square(r);
    };
    for (Stencil st : {Stencil::two_point, Stencil::five_point}) {
      const auto report = grad_check(loss, p, 1e-7, 100, 0, st);
      CHECK(report.probes == d);
      CHECK(report.max_rel_error < 1e-7);
      CHECK(report.passed);
    }
  }
  SUBCASE("a wrong gradient is reported") {
    ParameterStore p;
    p.add("w", Tensor({3}, Vector{1, 2, 3}));
    p.add("z", Tensor({1}, Vector{0.5}));
    LossFunction loss = [](const ParameterStore& q, ParameterStore* g) {
      double s = 0;
      for (double v : q.at("w").data()) s += v * v;
      s += q.at("z")[0] * q.at("z")[0];
      if (g) {
        for (std::size_t i = 0; i < 3; ++i) g->at("w")[i] = 2 * q.at("w")[i];
        g->at("z")[0] = 3 * q.at("z")[0];
      }
      return s;
    };
    const auto report = grad_check(loss, p, 1e-4, 10);
    CHECK_FALSE(report.passed);
    CHECK(report.worst_parameter == "z");
    CHECK(report.max_rel_error == doctest::Approx(1.0 / 3).epsilon(1e-6));
  }
  SUBCASE("probe subset is seeded") {
    ParameterStore p;
    p.add("w", random_tensor(rng, {50}));
    LossFunction loss = [](const ParameterStore& q, ParameterStore* g) {
      double s = 0;
      for (std::size_t i = 0; i < 50; ++i) {
        s += std::sin(q.at("w")[i]);
        if (g) g->at("w")[i] = std::cos(q.at("w")[i]);
      }
      return s;
    };
    const auto a = grad_check(loss, p, 1e-6, 10, 4), b = grad_check(loss, p, 1e-6, 10, 4);
    CHECK(a.probes == 10);
    CHECK(a.worst_index == b.worst_index);
    CHECK(a.max_rel_error == b.max_rel_error);
    CHECK(a.passed);
  }
}

TEST_CASE("tiny seq2seq passes the gradient check") {
  const auto summary = model_grad_check(0);
  for (const auto& c : summary.cases) {
    INFO(c.label << " worst " << c.report.worst_parameter);
    CHECK(c.report.max_rel_error < 1e-4);
  }
  CHECK(summary.probes >= 200);
  CHECK(summary.passed);
}
