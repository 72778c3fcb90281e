#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "deltaspike/error.hpp"
#include "deltaspike/events.hpp"
#include "signals.hpp"

using namespace deltaspike;
using namespace deltaspike::events;

namespace {

std::vector<Event> ev(std::initializer_list<Event> list) { return list; }

// Hand-written delta-reference rule, independent of the library loop.
std::vector<Event> delta_reference_oracle(const std::vector<double>& x, double delta) {
  std::vector<Event> out;
  double level = x[0];
  for (std::size_t n = 1; n < x.size(); ++n) {
    const double up = x[n] - level;
    const double down = level - x[n];
    if (up >= delta) {
      out.push_back({n, kOnNeuron});
      level += delta;
    } else if (down >= delta) {
      out.push_back({n, kOffNeuron});
      level -= delta;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("sod_sample: constant signal emits nothing") {
  const std::vector<double> x{3, 3, 3, 3};
  CHECK(sod_sample(x, 1.0).empty());
  CHECK(sod_sample(x, 1.0, ReferenceMode::kValue).empty());
}

TEST_CASE("sod_sample: value-reference ramp fires every fourth step") {
  std::vector<double> x;
  for (int n = 0; n <= 12; ++n) x.push_back(0.3 * n);
  const auto s = sod_sample(x, 1.0, ReferenceMode::kValue);
  CHECK(s.events() == ev({{4, kOnNeuron}, {8, kOnNeuron}, {12, kOnNeuron}}));
  CHECK(s.n_steps() == 13);
  CHECK(s.n_neurons() == 2);
}

TEST_CASE("sod_sample: value-reference up then down") {
  const std::vector<double> x{0, 1.5, 0};
  const auto s = sod_sample(x, 1.0, ReferenceMode::kValue);
  CHECK(s.events() == ev({{1, kOnNeuron}, {2, kOffNeuron}}));
}

TEST_CASE("sod_sample: delta-reference carries the overshoot") {
  const std::vector<double> x{0, 2.5, 2.5};
  CHECK(sod_sample(x, 1.0).events() == ev({{1, kOnNeuron}, {2, kOnNeuron}}));
  // Value reference jumps to 2.5 and stays quiet.
  CHECK(sod_sample(x, 1.0, ReferenceMode::kValue).events() == ev({{1, kOnNeuron}}));
}

TEST_CASE("sod_sample: parameter errors") {
  const std::vector<double> x{0, 1};
  CHECK_THROWS_AS(sod_sample(x, 0.0), ParameterError);
  CHECK_THROWS_AS(sod_sample(x, -1.0), ParameterError);
  CHECK_THROWS_AS(sod_sample(std::vector<double>{}, 1.0), ParameterError);
}

TEST_CASE("sod_sample matches the hand-written delta-reference rule") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = testing::piecewise_smooth(rng, 150);
    const double delta = 0.1 + 0.9 * std::uniform_real_distribution<double>()(rng);
    CHECK(sod_sample(x, delta).events() == delta_reference_oracle(x, delta));
  }
}

TEST_CASE("sod_reconstruct: bookkeeping") {
  EventStream empty(5, 2);
  CHECK(sod_reconstruct(empty, 2.0, 1.0) == std::vector<double>(5, 2.0));

  EventStream one(6, 2);
  one.push(3, kOnNeuron);
  CHECK(sod_reconstruct(one, 0.0, 1.0) == std::vector<double>{0, 0, 0, 1, 1, 1});

  CHECK_THROWS_AS(sod_reconstruct(one, 0.0, 1.0, 7), ParameterError);
  CHECK_NOTHROW(sod_reconstruct(one, 0.0, 1.0, 6));
}

TEST_CASE("sod_reconstruct: roundtrip error stays below two deltas") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double delta = 0.2 + u(rng);
    // Smooth walk with per-step increments strictly below delta.
    std::vector<double> x(300);
    double v = 0.0, slope = 0.0;
    for (auto& xi : x) {
      slope = 0.9 * slope + 0.1 * (2.0 * u(rng) - 1.0) * 0.95 * delta;
      v += slope;
      xi = v;
    }
    const auto stream = sod_sample(x, delta);
    const auto rec = sod_reconstruct(stream, x[0], delta, x.size());
    for (std::size_t n = 1; n < x.size(); ++n) {
      CHECK(std::abs(x[n] - rec[n]) < 2.0 * delta);
    }
  }
}

TEST_CASE("if_sod_encode: worked examples") {
  const std::vector<double> x{0, 2.5, 2.5};
  CHECK(if_sod_encode(x, 1.0, -1.0).events() == ev({{1, kOnNeuron}, {2, kOnNeuron}}));
  CHECK(if_sod_encode(std::vector<double>(8, 1.7), 0.5, -0.5).empty());
  CHECK_THROWS_AS(if_sod_encode(x, -1.0, -1.0), ParameterError);
  CHECK_THROWS_AS(if_sod_encode(x, 1.0, 1.0), ParameterError);
}

TEST_CASE("if_sod_encode equals delta-reference sampling") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.05, 2.0);
  for (int trial = 0; trial < 300; ++trial) {
    const auto x = testing::piecewise_smooth(rng, 200);
    const double w = u(rng);
    CHECK(if_sod_encode(x, w, -w) == sod_sample(x, w, ReferenceMode::kDelta));
  }
}

TEST_CASE("event stream text format round-trips") {
  std::mt19937_64 rng(2);
  const auto x = testing::piecewise_smooth(rng, 100);
  const auto s = sod_sample(x, 0.3);
  std::stringstream buf;
  write_event_stream(buf, s);
  CHECK(buf.str().rfind("100,2\n", 0) == 0);
  CHECK(read_event_stream(buf) == s);

  std::istringstream bad1("10,2\n3,x\n");
  CHECK_THROWS_AS(read_event_stream(bad1), DataError);
  std::istringstream bad2("10,2\n3,1\n2,0\n");
  CHECK_THROWS_AS(read_event_stream(bad2), DataError);
  std::istringstream bad3("10,2\n10,0\n");
  CHECK_THROWS_AS(read_event_stream(bad3), DataError);
  std::istringstream bad4("");
  CHECK_THROWS_AS(read_event_stream(bad4), DataError);
}

TEST_CASE("EventStream enforces its invariants") {
  EventStream s(4, 3);
  s.push(0, 1);
  s.push(0, 2);
  CHECK_THROWS_AS(s.push(0, 2), ParameterError);  // duplicate pair
  CHECK_THROWS_AS(s.push(0, 0), ParameterError);  // out of order
  s.push(2, 0);
  CHECK_THROWS_AS(s.push(1, 0), ParameterError);
  CHECK_THROWS_AS(s.push(4, 0), ParameterError);
  CHECK_THROWS_AS(s.push(3, 3), ParameterError);
  CHECK(s.size() == 3);
}

TEST_CASE("DirectionBank derived quantities") {
  DirectionBank bank(Tensor({2, 2}, {1.0, 2.0, -3.0, 0.5}));
  CHECK(bank.threshold(0) == 5.0);
  CHECK(bank.threshold(1) == 9.25);
  CHECK(bank.lateral(0, 1) == bank.lateral(1, 0));
  CHECK(bank.lateral(0, 1) == doctest::Approx(2.0));
  CHECK(bank.lateral(1, 1) == -bank.threshold(1));
  CHECK_THROWS_AS(DirectionBank(Tensor({2, 2}, {1.0, 0.0, 0.0, 0.0})), ParameterError);
  CHECK_THROWS_AS(DirectionBank(Tensor({2, 1}, {1.0, NAN})), ParameterError);
}

TEST_CASE("multidim encoder reduces to the two-neuron codec in 1-D") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = testing::piecewise_smooth(rng, 120);
    const double w = std::uniform_real_distribution<double>(0.1, 1.5)(rng);
    const DirectionBank bank(Tensor({2, 1}, {w, -w}));
    const Tensor sig({x.size(), 1}, x);
    const auto md = multidim_sod_encode(sig, bank);
    CHECK(md.events() == if_sod_encode(x, w, -w).events());
  }
}

TEST_CASE("multidim encoder: ramp along the first axis") {
  const DirectionBank bank(Tensor({4, 2}, {1, 0, 0, 1, -1, 0, 0, -1}));
  Tensor x({11, 2});
  for (std::size_t n = 0; n < 11; ++n) x.at(n, 0) = 0.5 * static_cast<double>(n);
  const auto s = multidim_sod_encode(x, bank);
  CHECK(s.events() == ev({{2, 0}, {4, 0}, {6, 0}, {8, 0}, {10, 0}}));
  CHECK_THROWS_AS(multidim_sod_encode(Tensor({5, 3}), bank), ParameterError);
}

TEST_CASE("multidim encoder: orthogonal axes track each dimension independently") {
  std::mt19937_64 rng(4);
  const Tensor x = testing::random_walk(rng, 200, 2, 0.4);
  const auto bank = DirectionBank::axes(2, 0.7);
  CHECK(bank.lateral(0, 2) == 0.0);
  const auto joint = multidim_sod_encode(x, bank);
  for (std::size_t d = 0; d < 2; ++d) {
    std::vector<double> xd(200);
    for (std::size_t n = 0; n < 200; ++n) xd[n] = x.at(n, d);
    std::vector<Event> expected;
    for (const Event& e : joint.events()) {
      if (e.neuron / 2 == d) expected.push_back({e.step, e.neuron % 2});
    }
    CHECK(sod_sample(xd, 0.7).events() == expected);
  }
}

TEST_CASE("reference_trajectory") {
  const DirectionBank bank(Tensor({1, 2}, {1.0, -1.0}));
  EventStream empty(4, 1);
  const std::vector<double> x0{0.5, 2.0};
  const auto flat = reference_trajectory(empty, bank, x0);
  for (std::size_t n = 0; n < 4; ++n) {
    CHECK(flat.at(n, 0) == 0.5);
    CHECK(flat.at(n, 1) == 2.0);
  }
  EventStream one(4, 1);
  one.push(0, 0);
  const auto traj = reference_trajectory(one, bank, std::vector<double>{0.0, 0.0});
  CHECK(traj.at(0, 0) == 0.0);
  for (std::size_t n = 1; n < 4; ++n) {
    CHECK(traj.at(n, 0) == 1.0);
    CHECK(traj.at(n, 1) == -1.0);
  }
  CHECK_THROWS_AS(reference_trajectory(one, bank, std::vector<double>{0.0}), ParameterError);
}

TEST_CASE("projection identity holds at every step without leak") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 8, m = 1 + rng() % 4;
    const DirectionBank bank(testing::random_matrix(rng, n, m, 0.6));
    const Tensor x = testing::random_walk(rng, 80, m, 0.5);
    const auto trace = multidim_sod_encode_traced(x, bank);
    const std::vector<double> x0(x.data(), x.data() + m);
    const Tensor x_hat = reference_trajectory(trace.events, bank, x0);
    for (std::size_t t = 0; t < 80; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        double proj = 0.0;
        const auto w = bank.direction(i);
        for (std::size_t d = 0; d < m; ++d) proj += w[d] * (x.at(t, d) - x_hat.at(t, d));
        const double u = trace.potentials.at(t, i);
        CHECK(std::abs(u - proj) <= 1e-9 * std::max({1.0, std::abs(u), std::abs(proj)}));
      }
    }
  }
}

TEST_CASE("collinear full reset subtracts the neuron's own threshold") {
  const DirectionBank bank(Tensor({2, 1}, {0.8, -0.8}));
  const Tensor x({5, 1}, {0.0, 1.0, 1.0, 1.0, 1.0});
  const auto trace = multidim_sod_encode_traced(x, bank);
  CHECK(trace.events.events() == ev({{1, 0}}));
  CHECK(trace.potentials.at(2, 0) == doctest::Approx(trace.potentials.at(1, 0) - 0.64).epsilon(1e-12));
}

TEST_CASE("orthogonal neurons can be removed without changing the others") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 40; ++trial) {
    // Rows 0..n-2 live in the first two dims; the last row is along dim 2.
    const std::size_t n = 2 + rng() % 4;
    Tensor w({n, 3});
    std::normal_distribution<double> g(0.0, 0.7);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      w.at(i, 0) = g(rng);
      w.at(i, 1) = g(rng);
    }
    w.at(n - 1, 2) = 0.3 + std::abs(g(rng));
    Tensor w_reduced({n - 1, 3}, std::vector<double>(w.data(), w.data() + (n - 1) * 3));
    const Tensor x = testing::random_walk(rng, 100, 3, 0.4);
    const auto full = multidim_sod_encode(x, DirectionBank(w));
    const auto reduced = multidim_sod_encode(x, DirectionBank(w_reduced));
    std::vector<Event> kept;
    for (const Event& e : full.events()) {
      if (e.neuron != n - 1) kept.push_back(e);
    }
    CHECK(kept == reduced.events());
  }
}

TEST_CASE("scaling signal and directions together leaves events unchanged") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng() % 5, m = 1 + rng() % 3;
    const Tensor w = testing::random_matrix(rng, n, m, 0.6);
    const Tensor x = testing::random_walk(rng, 100, m, 0.4);
    for (double c : {0.25, 2.0, 8.0}) {
      Tensor wc = w, xc = x;
      for (double& v : wc.storage()) v *= c;
      for (double& v : xc.storage()) v *= c;
      CHECK(multidim_sod_encode(xc, DirectionBank(wc)) ==
            multidim_sod_encode(x, DirectionBank(w)));
    }
  }
}

TEST_CASE("leaky codec decays toward zero between inputs") {
  const DirectionBank bank(Tensor({2, 1}, {1.0, -1.0}));
  const Tensor x({4, 1}, {0.0, 0.6, 0.6, 0.6});
  const auto trace = multidim_sod_encode_traced(x, bank, 0.5);
  CHECK(trace.events.empty());
  CHECK(trace.potentials.at(1, 0) == doctest::Approx(0.6));
  CHECK(trace.potentials.at(2, 0) == doctest::Approx(0.3));
  CHECK(trace.potentials.at(3, 0) == doctest::Approx(0.15));
  CHECK_THROWS_AS(multidim_sod_encode(x, bank, 1.5), ParameterError);
}
