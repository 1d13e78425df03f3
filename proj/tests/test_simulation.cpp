#include <doctest.h>

#include <cmath>

#include "jm/longitudinal.hpp"
#include "jm/rng.hpp"
#include "jm/simulate.hpp"
#include "oracles.hpp"

using namespace jm;

TEST_CASE("invert_cumulative_hazard: closed-form inversions") {
  SUBCASE("unit hazard, u = e^-2 gives T = 2") {
    auto log_fn = [](double) { return 0.0; };
    const auto t = invert_cumulative_hazard(log_fn, 0.0, std::exp(-2.0), {}, 50.0);
    REQUIRE(t.has_value());
    CHECK(*t == doctest::Approx(2.0).epsilon(1e-8));
  }
  SUBCASE("lambda = 2t (Weibull-type), u = e^-4 gives T = 2") {
    auto log_fn = [](double t) { return std::log(2.0) + std::log(std::max(t, 1e-300)); };
    const auto t = invert_cumulative_hazard(log_fn, 0.0, std::exp(-4.0), {}, 50.0);
    REQUIRE(t.has_value());
    CHECK(*t == doctest::Approx(2.0).epsilon(1e-8));
  }
  SUBCASE("u near 1 returns the entry time") {
    auto log_fn = [](double) { return 0.0; };
    const auto t = invert_cumulative_hazard(log_fn, 1.3, 1.0 - 1e-12, {}, 50.0);
    REQUIRE(t.has_value());
    CHECK(*t == doctest::Approx(1.3).epsilon(1e-7));
  }
  SUBCASE("no root before the bracket limit means censoring") {
    auto log_fn = [](double) { return -30.0; };
    CHECK_FALSE(invert_cumulative_hazard(log_fn, 0.0, 0.5, {}, 10.0).has_value());
  }
  SUBCASE("delayed entry: the integral starts at entry") {
    auto log_fn = [](double) { return 0.0; };
    const auto t = invert_cumulative_hazard(log_fn, 1.0, std::exp(-2.0), {}, 50.0);
    REQUIRE(t.has_value());
    CHECK(*t == doctest::Approx(3.0).epsilon(1e-8));
  }
}

TEST_CASE("simulated event times pass a KS test against the exponential law") {
  // constant-hazard truth: T - entry ~ Exponential(lambda)
  const double level = -1.2;  // lambda = exp(-1.2)
  auto log_fn = [&](double) { return level; };
  Rng rng(2024);
  std::vector<double> samples;
  const int n = 4000;
  while (static_cast<int>(samples.size()) < n) {
    const double u = rng.uniform();
    const auto t = invert_cumulative_hazard(log_fn, 0.5, u, {}, 1e4);
    REQUIRE(t.has_value());
    samples.push_back(*t - 0.5);
  }
  const double d = oracle::ks_statistic_exponential(samples, std::exp(level));
  const double p = oracle::ks_pvalue(samples.size(), d);
  CHECK(p > 0.01);
}

TEST_CASE("simulate_cohort: cohort-level frequencies at application scale") {
  SimTruth truth;  // defaults: reported posterior means, 11% target events
  const SimCohort sim = simulate_cohort(truth, 514, 2026);
  REQUIRE(sim.cohort.n_subjects() == 514);

  double female = 0.0, events = 0.0;
  for (const auto& s : sim.cohort.subjects) {
    female += s.sex;
    events += s.event.event;
  }
  female /= 514.0;
  events /= 514.0;
  CHECK(std::abs(female - 0.61) < 0.04);
  CHECK(std::abs(events - 0.11) < 0.05);

  CHECK(validate_cohort(sim.cohort).ok());

  // latent/observable consistency: delta = 1 iff T* <= C
  for (std::size_t i = 0; i < sim.latent.size(); ++i) {
    const auto& l = sim.latent[i];
    const auto& s = sim.cohort.subjects[i];
    if (l.event == 1) {
      CHECK(l.t_star <= l.censor_time);
      CHECK(s.event.time == doctest::Approx(l.t_star));
    } else {
      CHECK(l.t_star > l.censor_time);
      CHECK(s.event.time == doctest::Approx(l.censor_time));
    }
  }
}

TEST_CASE("simulate_cohort: zero-hazard truth censors everyone") {
  SimTruth truth;
  truth.baseline = SimTruth::Baseline::Constant;
  truth.baseline_level = -1000.0;  // cap: baseline underflows to zero hazard
  truth.mean_visits = 5;
  const SimCohort sim = simulate_cohort(truth, 40, 1);
  for (const auto& s : sim.cohort.subjects) {
    CHECK(s.event.event == 0);
    CHECK(s.event.time == doctest::Approx(truth.study_end));
  }
}

TEST_CASE("simulate_cohort: zero noise puts measurements exactly on the latent trajectory") {
  SimTruth truth;
  truth.sigma = 0.0;
  truth.baseline = SimTruth::Baseline::Constant;
  truth.baseline_level = -3.0;
  truth.alpha_area = 0.0;
  truth.mean_visits = 6;
  const SimCohort sim = simulate_cohort(truth, 20, 8);

  const ModelSpec spec = model_preset("m5");
  LongitudinalParams lp;
  lp.beta = truth.beta;
  lp.sigma = 1.0;  // unused by eta
  for (std::size_t i = 0; i < sim.cohort.subjects.size(); ++i) {
    const Subject& s = sim.cohort.subjects[i];
    const StepFunction bmiz = bmiz_trajectory(s);
    const RandomEffects b = sim.latent[i].b;
    for (const auto& r : s.records)
      CHECK(r.value == doctest::Approx(eta(s, spec, lp, b, r.time, bmiz)).epsilon(1e-12));
  }
}

TEST_CASE("simulate_cohort: determinism and subject-level substreams") {
  SimTruth truth;
  truth.mean_visits = 5;
  const SimCohort a = simulate_cohort(truth, 25, 99);
  const SimCohort b = simulate_cohort(truth, 25, 99);
  CHECK(cohorts_equal(a.cohort, b.cohort));
  const SimCohort c = simulate_cohort(truth, 25, 100);
  CHECK_FALSE(cohorts_equal(a.cohort, c.cohort));
}

TEST_CASE("simulated KM tracks the analytic survival under a null model") {
  // constant hazard, no covariate effects, no associations
  SimTruth truth;
  truth.baseline = SimTruth::Baseline::Constant;
  truth.baseline_level = std::log(0.25);
  truth.alpha_area = 0.0;
  truth.omega.setZero();
  truth.entry_max = 0.0;  // everyone enters at 0
  truth.mean_visits = 4;
  truth.study_end = 6.0;
  const SimCohort sim = simulate_cohort(truth, 600, 314);

  std::vector<double> times;
  std::vector<int> events;
  for (const auto& s : sim.cohort.subjects) {
    times.push_back(s.event.time);
    events.push_back(s.event.event);
  }
  const auto brute = oracle::km_curve(times, events);
  // compare at interior grid points against exp(-0.25 t) within a generous band
  for (double t : {1.0, 2.0, 3.0, 4.0, 5.0}) {
    const double km = oracle::km_value(brute, t);
    const double truth_s = std::exp(-0.25 * t);
    const double se = std::sqrt(truth_s * (1.0 - truth_s) / 600.0);
    CHECK(std::abs(km - truth_s) < 4.0 * se + 0.01);
  }
}

TEST_CASE("calibrate_baseline_level: achieves the requested event fraction") {
  SimTruth truth;
  truth.target_event_fraction = 0.3;
  truth.baseline_level = std::numeric_limits<double>::quiet_NaN();
  const double level = calibrate_baseline_level(truth, 1200, 5);
  SimTruth fixed = truth;
  fixed.baseline_level = level;
  const SimCohort sim = simulate_cohort(fixed, 800, 6);
  double events = 0.0;
  for (const auto& s : sim.cohort.subjects) events += s.event.event;
  CHECK(std::abs(events / 800.0 - 0.3) < 0.06);
}
