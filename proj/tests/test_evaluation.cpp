#include <doctest.h>

#include <cmath>

#include "jm/evaluation.hpp"
#include "jm/rng.hpp"
#include "jm/simulate.hpp"
#include "oracles.hpp"

using namespace jm;

TEST_CASE("kaplan_meier: hand-computed curves") {
  SUBCASE("no events: survival stays at one") {
    const KmCurve km = kaplan_meier({1.0, 2.0, 3.0}, {0, 0, 0});
    CHECK(km.times.empty());
    CHECK(km.at(2.5) == 1.0);
  }
  SUBCASE("times {1,2,3}, events {1,0,1}") {
    const KmCurve km = kaplan_meier({1.0, 2.0, 3.0}, {1, 0, 1});
    CHECK(km.at(1.0) == doctest::Approx(2.0 / 3.0));
    CHECK(km.at(2.0) == doctest::Approx(2.0 / 3.0));
    CHECK(km.at(3.0) == doctest::Approx(0.0));
    CHECK(km.at_left(1.0) == doctest::Approx(1.0));
  }
  SUBCASE("four distinct events step through 3/4, 1/2, 1/4, 0") {
    const KmCurve km = kaplan_meier({1.0, 2.0, 3.0, 4.0}, {1, 1, 1, 1});
    REQUIRE(km.survival.size() == 4);
    CHECK(km.survival[0] == doctest::Approx(0.75));
    CHECK(km.survival[1] == doctest::Approx(0.5));
    CHECK(km.survival[2] == doctest::Approx(0.25));
    CHECK(km.survival[3] == doctest::Approx(0.0));
  }
  SUBCASE("empty input is an error") { CHECK_THROWS_AS(kaplan_meier({}, {}), DataError); }
  SUBCASE("no censoring equals the empirical survival function") {
    Rng rng(42);
    std::vector<double> times;
    std::vector<int> events;
    for (int i = 0; i < 50; ++i) {
      times.push_back(rng.uniform(0.1, 5.0));
      events.push_back(1);
    }
    const KmCurve km = kaplan_meier(times, events);
    for (double t : {0.5, 1.5, 3.0, 4.9}) {
      int alive = 0;
      for (double u : times)
        if (u > t) ++alive;
      CHECK(km.at(t) == doctest::Approx(static_cast<double>(alive) / times.size()).epsilon(1e-12));
    }
  }
  SUBCASE("left truncation changes the risk set") {
    const std::vector<double> entries = {0.0, 1.5, 0.0};
    const KmCurve km = kaplan_meier({1.0, 2.0, 3.0}, {1, 1, 1}, &entries);
    // at t=1 subject 2 (entry 1.5) is not yet at risk: S(1) = 1 - 1/2
    CHECK(km.survival[0] == doctest::Approx(0.5));
  }
  SUBCASE("matches the brute-force product-limit on random instances") {
    Rng rng(7);
    for (int rep = 0; rep < 100; ++rep) {
      const int n = 3 + static_cast<int>(rng.uniform() * 22);
      std::vector<double> times;
      std::vector<int> events;
      for (int i = 0; i < n; ++i) {
        times.push_back(std::round(rng.uniform(0.1, 4.0) * 8.0) / 8.0);  // force ties
        events.push_back(rng.bernoulli(0.7));
      }
      const KmCurve km = kaplan_meier(times, events);
      const auto brute = oracle::km_curve(times, events);
      for (double t : {0.3, 1.0, 2.2, 3.7})
        CHECK(km.at(t) == doctest::Approx(oracle::km_value(brute, t)).epsilon(1e-12));
    }
  }
}

TEST_CASE("ipcw_weights: hand instances") {
  SUBCASE("no censoring: all at-risk weights are one") {
    const auto labels = ipcw_weights({1.0, 2.0, 3.0, 4.0}, {1, 1, 1, 1}, {0, 0, 0, 0}, 0.5, 2.0);
    for (const auto& lab : labels) {
      CHECK(lab.at_risk);
      CHECK(lab.weight == doctest::Approx(1.0));
    }
  }
  SUBCASE("subject censored inside the window gets weight zero") {
    const auto labels = ipcw_weights({1.0, 3.0}, {0, 1}, {0, 0}, 0.5, 1.0);
    CHECK(labels[0].weight == 0.0);
    CHECK(labels[0].event_in_window == 0);
  }
  SUBCASE("four-subject instance with one censoring matches hand-computed ratios") {
    // times: 1.0 (censored), 1.5 (event), 2.5 (event), 3.0 (censored)
    const std::vector<double> times = {1.0, 1.5, 2.5, 3.0};
    const std::vector<int> events = {0, 1, 1, 0};
    const double t_L = 0.5, dt = 1.5;  // window (0.5, 2.0]
    const auto labels = ipcw_weights(times, events, {0, 0, 0, 0}, t_L, dt);
    // censoring KM: censoring events at 1.0 (4 at risk) and 3.0 (1 at risk)
    // K(t) = 3/4 for 1.0 <= t < 3.0
    // subject 2 (event at 1.5): K(1.5-)/K(0.5) = 3/4 -> weight 4/3
    CHECK(labels[1].event_in_window == 1);
    CHECK(labels[1].weight == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    // subjects with T > 2.0: K(2.0)/K(0.5) = 3/4 -> weight 4/3
    CHECK(labels[2].weight == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    CHECK(labels[3].weight == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
    // subject censored at 1.0 inside the window: weight 0
    CHECK(labels[0].weight == 0.0);
  }
}

TEST_CASE("auc_ipcw: hand values and oracle equivalence") {
  SUBCASE("perfect separation gives 1") {
    const std::vector<double> times = {1.0, 1.2, 5.0, 6.0};
    const std::vector<int> events = {1, 1, 0, 0};
    const auto labels = ipcw_weights(times, events, {0, 0, 0, 0}, 0.5, 1.0);
    const auto auc = auc_ipcw({0.9, 0.8, 0.1, 0.2}, labels);
    REQUIRE(auc.has_value());
    CHECK(*auc == doctest::Approx(1.0));
  }
  SUBCASE("ties contribute one half") {
    const std::vector<double> times = {1.0, 5.0};
    const std::vector<int> events = {1, 0};
    const auto labels = ipcw_weights(times, events, {0, 0}, 0.5, 1.0);
    const auto auc = auc_ipcw({0.5, 0.5}, labels);
    REQUIRE(auc.has_value());
    CHECK(*auc == doctest::Approx(0.5));
  }
  SUBCASE("no comparable pairs is distinct from zero") {
    const std::vector<double> times = {5.0, 6.0};
    const std::vector<int> events = {0, 0};
    const auto labels = ipcw_weights(times, events, {0, 0}, 0.5, 1.0);
    CHECK_FALSE(auc_ipcw({0.3, 0.4}, labels).has_value());
  }
  SUBCASE("random predictions approach 0.5 on large n") {
    Rng rng(21);
    const int n = 4000;
    std::vector<double> times, preds;
    std::vector<int> events;
    std::vector<double> entries(n, 0.0);
    for (int i = 0; i < n; ++i) {
      times.push_back(rng.uniform(0.2, 5.0));
      events.push_back(1);
      preds.push_back(rng.uniform());
    }
    const auto labels = ipcw_weights(times, events, entries, 0.5, 2.0);
    const auto auc = auc_ipcw(preds, labels);
    REQUIRE(auc.has_value());
    CHECK(*auc == doctest::Approx(0.5).epsilon(0.05));
  }
}

TEST_CASE("brier_ipcw: hand values") {
  SUBCASE("perfect predictions, no censoring") {
    const std::vector<double> times = {1.0, 1.5, 5.0, 6.0};
    const std::vector<int> events = {1, 1, 1, 1};
    const auto labels = ipcw_weights(times, events, {0, 0, 0, 0}, 0.5, 1.5);
    const auto bs = brier_ipcw({1.0, 1.0, 0.0, 0.0}, labels);
    REQUIRE(bs.has_value());
    CHECK(*bs == doctest::Approx(0.0));
  }
  SUBCASE("coin-flip predictions, half events in window") {
    const std::vector<double> times = {1.0, 1.5, 5.0, 6.0};
    const std::vector<int> events = {1, 1, 1, 1};
    const auto labels = ipcw_weights(times, events, {0, 0, 0, 0}, 0.5, 1.5);
    const auto bs = brier_ipcw({0.5, 0.5, 0.5, 0.5}, labels);
    REQUIRE(bs.has_value());
    CHECK(*bs == doctest::Approx(0.25));
  }
  SUBCASE("everyone past the landmark zero: undefined") {
    const std::vector<double> times = {0.1, 0.2};
    const std::vector<int> events = {1, 1};
    const auto labels = ipcw_weights(times, events, {0, 0}, 0.5, 1.0);
    CHECK_FALSE(brier_ipcw({0.5, 0.5}, labels).has_value());
  }
}

TEST_CASE("auc/brier: equivalence with the brute-force oracle on random instances") {
  Rng rng(314);
  int comparable_auc = 0, comparable_bs = 0;
  for (int rep = 0; rep < 150; ++rep) {
    const int n = 4 + static_cast<int>(rng.uniform() * 21);
    std::vector<double> times, preds, entries(n, 0.0);
    std::vector<int> events;
    for (int i = 0; i < n; ++i) {
      times.push_back(std::round(rng.uniform(0.1, 5.0) * 8.0) / 8.0);
      events.push_back(rng.bernoulli(0.6));
      preds.push_back(std::round(rng.uniform() * 16.0) / 16.0);  // induce prediction ties
    }
    const double t_L = rng.uniform(0.0, 1.0);
    const double dt = rng.uniform(0.5, 3.0);
    const auto labels = ipcw_weights(times, events, entries, t_L, dt);
    const auto auc = auc_ipcw(preds, labels);
    const auto auc_brute = oracle::auc_ipcw(preds, times, events, t_L, dt);
    CHECK(auc.has_value() == auc_brute.has_value());
    if (auc && auc_brute) {
      CHECK(*auc == doctest::Approx(*auc_brute).epsilon(1e-12));
      ++comparable_auc;
    }
    const auto bs = brier_ipcw(preds, labels);
    const auto bs_brute = oracle::brier_ipcw(preds, times, events, t_L, dt);
    CHECK(bs.has_value() == bs_brute.has_value());
    if (bs && bs_brute) {
      CHECK(*bs == doctest::Approx(*bs_brute).epsilon(1e-12));
      ++comparable_bs;
    }
  }
  CHECK(comparable_auc > 100);
  CHECK(comparable_bs > 100);
}

TEST_CASE("waic and lpml: degenerate and hand instances") {
  SUBCASE("degenerate draws: p_waic = 0, criteria collapse to plain log likelihoods") {
    Eigen::MatrixXd ll(3, 4);
    ll << -1.0, -1.0, -1.0, -1.0, -2.5, -2.5, -2.5, -2.5, -0.3, -0.3, -0.3, -0.3;
    const WaicResult w = waic(ll);
    CHECK(w.p_waic == doctest::Approx(0.0));
    CHECK(w.lppd == doctest::Approx(-3.8).epsilon(1e-12));
    CHECK(w.waic == doctest::Approx(7.6).epsilon(1e-12));
    const LpmlResult l = lpml(ll);
    CHECK(l.lpml == doctest::Approx(-3.8).epsilon(1e-12));
  }
  SUBCASE("two-subject two-draw hand arithmetic") {
    Eigen::MatrixXd ll(2, 2);
    ll << std::log(0.2), std::log(0.6), std::log(0.1), std::log(0.3);
    const WaicResult w = waic(ll);
    const double lppd = std::log(0.5 * (0.2 + 0.6)) + std::log(0.5 * (0.1 + 0.3));
    double p1 = std::pow(std::log(0.2) - 0.5 * (std::log(0.2) + std::log(0.6)), 2) * 2.0 / 1.0;
    // sample variance with n-1 = 1: (d1^2 + d2^2) where d = x - mean, d1 = -d2
    p1 = std::pow(std::log(0.2) - std::log(0.6), 2) / 2.0;
    const double p2 = std::pow(std::log(0.1) - std::log(0.3), 2) / 2.0;
    CHECK(w.lppd == doctest::Approx(lppd).epsilon(1e-12));
    CHECK(w.p_waic == doctest::Approx(p1 + p2).epsilon(1e-12));
    CHECK(w.waic == doctest::Approx(-2.0 * (lppd - p1 - p2)).epsilon(1e-12));

    const LpmlResult l = lpml(ll);
    const double cpo1 = 1.0 / (0.5 * (1.0 / 0.2 + 1.0 / 0.6));
    const double cpo2 = 1.0 / (0.5 * (1.0 / 0.1 + 1.0 / 0.3));
    CHECK(l.log_cpo[0] == doctest::Approx(std::log(cpo1)).epsilon(1e-12));
    CHECK(l.lpml == doctest::Approx(std::log(cpo1) + std::log(cpo2)).epsilon(1e-12));
  }
  SUBCASE("oracle equivalence on random log-likelihood matrices") {
    Rng rng(11);
    for (int rep = 0; rep < 120; ++rep) {
      const int n = 2 + static_cast<int>(rng.uniform() * 23);
      const int K = 2 + static_cast<int>(rng.uniform() * 30);
      Eigen::MatrixXd ll(n, K);
      for (int i = 0; i < n; ++i)
        for (int k = 0; k < K; ++k) ll(i, k) = rng.normal(-3.0, 1.5);
      const WaicResult w = waic(ll);
      const auto wo = oracle::waic(ll);
      CHECK(w.waic == doctest::Approx(wo.waic).epsilon(1e-12));
      CHECK(w.lppd == doctest::Approx(wo.lppd).epsilon(1e-12));
      CHECK(w.p_waic == doctest::Approx(wo.p_waic).epsilon(1e-12));
      const LpmlResult l = lpml(ll);
      const auto lo = oracle::lpml(ll);
      CHECK(l.lpml == doctest::Approx(lo.lpml).epsilon(1e-12));
    }
  }
  SUBCASE("zero likelihood flags the CPO as unstable") {
    Eigen::MatrixXd ll(1, 3);
    ll << -1.0, -std::numeric_limits<double>::infinity(), -2.0;
    const LpmlResult l = lpml(ll);
    CHECK(l.unstable[0]);
  }
  SUBCASE("single draw is an error") {
    Eigen::MatrixXd ll(2, 1);
    ll << -1.0, -2.0;
    CHECK_THROWS_AS(waic(ll), DataError);
    CHECK_THROWS_AS(lpml(ll), DataError);
  }
}

TEST_CASE("stratified_folds: balanced event counts") {
  SimTruth truth;
  truth.mean_visits = 4;
  truth.target_event_fraction = 0.3;
  const SimCohort sim = simulate_cohort(truth, 60, 5);
  const auto folds = stratified_folds(sim.cohort, 4, 17);
  int per_fold_events[4] = {0, 0, 0, 0};
  int per_fold_total[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < sim.cohort.subjects.size(); ++i) {
    REQUIRE(folds[i] >= 0);
    REQUIRE(folds[i] < 4);
    per_fold_total[folds[i]] += 1;
    per_fold_events[folds[i]] += sim.cohort.subjects[i].event.event;
  }
  int min_e = 1000, max_e = -1;
  for (int f = 0; f < 4; ++f) {
    min_e = std::min(min_e, per_fold_events[f]);
    max_e = std::max(max_e, per_fold_events[f]);
    CHECK(per_fold_total[f] >= 13);
  }
  CHECK(max_e - min_e <= 1);  // stratification balances events
}

TEST_CASE("cross_validate: runs end to end and flags degenerate cells") {
  SimTruth truth;
  truth.mean_visits = 5;
  truth.target_event_fraction = 0.3;
  truth.entry_max = 1.0;
  const SimCohort sim = simulate_cohort(truth, 60, 31);

  CvConfig cv;
  cv.folds = 3;
  cv.seed = 9;
  cv.mcmc.n_chains = 1;
  cv.mcmc.n_iterations = 400;
  cv.mcmc.thin = 4;
  cv.mcmc.quad_nodes = 7;
  cv.prediction_draws = 25;
  cv.mh_steps = 10;

  // one sensible window and one far-future degenerate window
  const MetricReport report = cross_validate(sim.cohort, model_preset("m5"), {1.5}, {2.0, 0.001}, cv);
  REQUIRE(report.cells.size() == 2);
  const MetricCell& good = report.cells[0];
  CHECK(good.auc_mean.has_value());
  CHECK(good.bs_mean.has_value());
  if (good.auc_mean) {
    CHECK(*good.auc_mean >= 0.0);
    CHECK(*good.auc_mean <= 1.0);
  }
  // the 0.001-year window has no events: cells flagged non-computable, run continues
  const MetricCell& degenerate = report.cells[1];
  CHECK_FALSE(degenerate.auc_mean.has_value());
  CHECK(degenerate.n_events_in_window == 0);
}
