#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "stabilitylab/experiment.hpp"

using namespace stabilitylab;

namespace {

// Small plan for fast orchestration tests: full pipeline, reduced grid.
ExperimentPlan small_plan(int n_qubits, int n_cycles,
                          std::vector<double> hours) {
  ExperimentPlan plan = default_plan(4242, n_qubits, n_cycles);
  plan.session_hours = std::move(hours);
  plan.grid = make_grid(4.20, 4.45, 21, 1.0, 120.0, 21);
  plan.t1_readout.shots = 1000;
  return plan;
}

}  // namespace

TEST_CASE("minimal plan produces one complete session and zero deviations") {
  const ExperimentPlan plan = small_plan(1, 1, {1.0});
  const ExperimentRecord record = run_longitudinal(plan);

  REQUIRE(record.qubits.size() == 1);
  REQUIRE(record.qubits[0].cycles.size() == 1);
  REQUIRE(record.qubits[0].cycles[0].sessions.size() == 1);

  const SessionRecord& s = record.qubits[0].cycles[0].sessions[0];
  CHECK_FALSE(s.missing);
  CHECK(s.clock_hours == Catch::Approx(1.0));
  CHECK(s.map.values.rows() == plan.grid.delay_us.size());
  CHECK(s.map.values.cols() == plan.grid.freq_ghz.size());
  CHECK(s.stats.n_fits == plan.grid.freq_ghz.size());
  CHECK(s.arch.f01_max_ghz > 4.4);

  REQUIRE(record.deviations.size() == 1);
  CHECK(record.deviations[0].cycle == 1);
  CHECK(record.deviations[0].delta_f01max_mhz == 0.0);
  CHECK(record.deviations[0].abs_delta_ibmax_phi0 == 0.0);
  CHECK(record.deviations[0].valid);
}

TEST_CASE("identical plans give bitwise-identical records") {
  const ExperimentPlan plan = small_plan(1, 2, {1.0, 5.0});
  const ExperimentRecord a = run_longitudinal(plan);
  const ExperimentRecord b = run_longitudinal(plan);

  REQUIRE(a.qubits.size() == b.qubits.size());
  for (std::size_t q = 0; q < a.qubits.size(); ++q) {
    for (std::size_t c = 0; c < a.qubits[q].cycles.size(); ++c) {
      const CycleRecord& ca = a.qubits[q].cycles[c];
      const CycleRecord& cb = b.qubits[q].cycles[c];
      CHECK(ca.gamma0_per_us == cb.gamma0_per_us);
      for (std::size_t s = 0; s < ca.sessions.size(); ++s) {
        CHECK(ca.sessions[s].map.values == cb.sessions[s].map.values);
        CHECK(ca.sessions[s].arch.f01_max_ghz == cb.sessions[s].arch.f01_max_ghz);
        CHECK(ca.sessions[s].stats.mean_t1_us == cb.sessions[s].stats.mean_t1_us);
        CHECK(ca.sessions[s].clock_hours == cb.sessions[s].clock_hours);
      }
    }
  }
  for (std::size_t i = 0; i < a.deviations.size(); ++i) {
    CHECK(a.deviations[i].delta_f01max_mhz == b.deviations[i].delta_f01max_mhz);
  }
}

TEST_CASE("gamma0 is preserved bit-for-bit across thermal cycles") {
  const ExperimentPlan plan = small_plan(2, 3, {1.0, 5.0});
  const ExperimentRecord record = run_longitudinal(plan);
  for (const QubitRecord& q : record.qubits) {
    const double g0 = q.cycles[0].gamma0_per_us;
    CHECK(g0 == 1.0 / 70.0);
    for (const CycleRecord& c : q.cycles) CHECK(c.gamma0_per_us == g0);
  }
}

TEST_CASE("cycle perturbation shifts the fitted arch between cycles") {
  const ExperimentPlan plan = small_plan(3, 2, {1.0});
  const ExperimentRecord record = run_longitudinal(plan);
  REQUIRE(record.deviations.size() == 6);
  int nonzero = 0;
  for (const DeviationRow& row : record.deviations) {
    CHECK(row.valid);
    if (row.cycle == 1) {
      CHECK(row.delta_f01max_mhz == 0.0);
      CHECK(row.abs_delta_ibmax_phi0 == 0.0);
    } else {
      // sigma_f01 = 3 MHz and offset redraw from +-0.12 Phi0: a cycle with
      // both deviations at exactly zero would be a broken perturbation.
      CHECK(std::abs(row.delta_f01max_mhz) < 20.0);
      CHECK(row.abs_delta_ibmax_phi0 <= 0.24 + 1e-12);
      if (row.delta_f01max_mhz != 0.0 || row.abs_delta_ibmax_phi0 != 0.0) {
        ++nonzero;
      }
    }
  }
  CHECK(nonzero == 3);
}

TEST_CASE("stf_matrix pair counts and labels") {
  const ExperimentPlan plan = small_plan(2, 3, {1.0, 10.0});
  const ExperimentRecord record = run_longitudinal(plan);
  AnalysisConfig cfg(0.05);

  SECTION("all-pairs mode scores C(n_sessions, 2) per qubit") {
    const StfMatrix m = stf_matrix(record, cfg, InterPairs::all);
    CHECK(m.size() == 2 * (6 * 5) / 2);
  }

  SECTION("adjacent mode keeps intra pairs and adjacent-cycle inter pairs") {
    const StfMatrix m = stf_matrix(record, cfg);
    std::size_t intra = 0, inter = 0;
    for (const StfReport& rep : m) {
      if (rep.kind == "intra") {
        ++intra;
        CHECK(rep.cycle_a == rep.cycle_b);
      } else {
        ++inter;
        CHECK(rep.cycle_b - rep.cycle_a == 1);
      }
      CHECK((rep.qubit == "Q01" || rep.qubit == "Q02"));
      CHECK(rep.session_a >= 1);
      CHECK(rep.session_b <= 2);
      CHECK(rep.delta > 0.0);
      CHECK(rep.pearson >= -1.0);
      CHECK(rep.pearson <= 1.0);
    }
    CHECK(intra == 2 * 3 * 1);  // C(2,2)=1 per cycle per qubit
    CHECK(inter == 2 * 2 * 4);  // 2 adjacent cycle pairs x 2x2 sessions
  }
}

TEST_CASE("inter-cycle dt reconstructs the planned cadence across resets") {
  const ExperimentPlan plan = small_plan(1, 3, {1.0, 10.0});
  const ExperimentRecord record = run_longitudinal(plan);
  REQUIRE(record.clocks_reset);
  AnalysisConfig cfg(0.05);
  const StfMatrix m = stf_matrix(record, cfg, InterPairs::all);

  auto dt_of = [&](int ca, int sa, int cb, int sb) {
    for (const StfReport& rep : m) {
      if (rep.cycle_a == ca && rep.session_a == sa && rep.cycle_b == cb &&
          rep.session_b == sb) {
        return rep.dt_hours;
      }
    }
    FAIL("pair not found");
    return 0.0;
  };

  // Cycle span is 10 h (last session). Remaining time in the earlier cycle
  // plus elapsed time in the later one.
  CHECK(dt_of(1, 1, 1, 2) == Catch::Approx(9.0));    // intra: clock diff
  CHECK(dt_of(1, 2, 2, 1) == Catch::Approx(1.0));    // (10-10) + 1
  CHECK(dt_of(1, 1, 2, 1) == Catch::Approx(10.0));   // (10-1) + 1
  CHECK(dt_of(1, 1, 2, 2) == Catch::Approx(19.0));   // (10-1) + 10
  CHECK(dt_of(1, 1, 3, 1) == Catch::Approx(20.0));   // (10-1) + 10 + 1
}

TEST_CASE("disabled perturbation keeps clocks cumulative and dt plain") {
  ExperimentPlan plan = small_plan(1, 2, {1.0, 10.0});
  plan.perturbation =
      CyclePerturbation{0.0, 0.0, /*reseed_tls=*/false, /*reset_clock=*/false};
  const ExperimentRecord record = run_longitudinal(plan);
  CHECK_FALSE(record.clocks_reset);

  const CycleRecord& c2 = record.qubits[0].cycles[1];
  CHECK(c2.start_clock_hours == Catch::Approx(10.0));
  CHECK(c2.sessions[0].clock_hours == Catch::Approx(11.0));
  CHECK(c2.sessions[1].clock_hours == Catch::Approx(20.0));

  AnalysisConfig cfg(0.05);
  const StfMatrix m = stf_matrix(record, cfg, InterPairs::all);
  for (const StfReport& rep : m) {
    if (rep.cycle_a == 1 && rep.session_a == 1 && rep.cycle_b == 2 &&
        rep.session_b == 1) {
      CHECK(rep.dt_hours == Catch::Approx(10.0));
    }
  }
}

TEST_CASE("single-session record yields an empty matrix") {
  const ExperimentPlan plan = small_plan(1, 1, {1.0});
  const ExperimentRecord record = run_longitudinal(plan);
  AnalysisConfig cfg(0.05);
  CHECK(stf_matrix(record, cfg).empty());
}

TEST_CASE("sessions that cannot reach the grid are flagged, not fatal") {
  ExperimentPlan plan = small_plan(1, 2, {1.0, 5.0});
  // f01_max = sqrt(8*12*0.2) - 0.2 = 4.18 GHz, below the 4.45 GHz grid top.
  plan.qubits[0].params.ej_ghz = 12.0;
  const ExperimentRecord record = run_longitudinal(plan);

  for (const CycleRecord& c : record.qubits[0].cycles) {
    for (const SessionRecord& s : c.sessions) {
      CHECK(s.missing);
      CHECK(s.failure.find("Q01/cycle") != std::string::npos);
      CHECK(s.failure.find("session") != std::string::npos);
    }
  }
  for (const DeviationRow& row : record.deviations) CHECK_FALSE(row.valid);
  AnalysisConfig cfg(0.05);
  CHECK(stf_matrix(record, cfg, InterPairs::all).empty());
}

TEST_CASE("summarize_decay recovers an exactly log-linear trend") {
  StfMatrix m;
  const double intercept = 0.9, slope = -0.15;
  for (double dt : {1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0,
                    1000.0}) {
    StfReport rep;
    rep.kind = "intra";
    rep.dt_hours = dt;
    rep.rho = intercept + slope * std::log10(dt);
    m.push_back(rep);
  }
  for (double r : {0.2, 0.25, 0.45}) {
    StfReport rep;
    rep.kind = "inter";
    rep.dt_hours = 1500.0;
    rep.rho = r;
    m.push_back(rep);
  }
  // A zero-dt replica pair carries no decay information and must be ignored.
  StfReport zero;
  zero.kind = "intra";
  zero.dt_hours = 0.0;
  zero.rho = 1.0;
  m.push_back(zero);

  const DecaySummary s = summarize_decay(m);
  CHECK(s.n_intra == 10);
  CHECK(s.n_inter == 3);
  CHECK(s.slope_per_decade == Catch::Approx(slope).margin(1e-9));
  CHECK(s.spearman_rho_vs_log_dt == Catch::Approx(-1.0));
  CHECK(s.inter_median_rho == Catch::Approx(0.25));
  CHECK(s.inter_mean_rho == Catch::Approx(0.3));
  for (const DecayBin& bin : s.bins) {
    CHECK(bin.median_rho ==
          Catch::Approx(intercept + slope * bin.median_log10_dt));
    CHECK(bin.n_pairs >= 1);
  }
}

TEST_CASE("summarize_decay demands 5 pairs over 2 decades") {
  auto intra = [](double dt) {
    StfReport rep;
    rep.kind = "intra";
    rep.dt_hours = dt;
    rep.rho = 0.5;
    return rep;
  };

  SECTION("too few pairs") {
    StfMatrix m{intra(1.0), intra(10.0), intra(100.0), intra(1000.0)};
    CHECK_THROWS_AS(summarize_decay(m), InsufficientSpan);
  }

  SECTION("too little span") {
    StfMatrix m{intra(1.0), intra(2.0), intra(5.0), intra(20.0), intra(50.0)};
    CHECK_THROWS_AS(summarize_decay(m), InsufficientSpan);
  }
}

TEST_CASE("default_plan draws a reproducible fleet") {
  const ExperimentPlan plan = default_plan(7);
  REQUIRE(plan.qubits.size() == 27);
  CHECK(plan.n_cycles == 4);
  CHECK(plan.qubits.front().label == "Q01");
  CHECK(plan.qubits.back().label == "Q27");

  std::set<std::string> labels;
  for (const QubitConfig& q : plan.qubits) {
    labels.insert(q.label);
    CHECK(q.params.ej_ghz >= 14.0 * 0.996);
    CHECK(q.params.ej_ghz <= 14.0 * 1.004);
    CHECK(q.params.ec_ghz == 0.2);
    CHECK(q.flux_line.bias_offset_ma >= 0.7);
    CHECK(q.flux_line.bias_offset_ma <= 1.3);
    CHECK(std::abs(q.flux_line.flux_offset_phi0) <= 0.12);
  }
  CHECK(labels.size() == 27);

  const ExperimentPlan again = default_plan(7);
  CHECK(again.qubits[5].params.ej_ghz == plan.qubits[5].params.ej_ghz);
  const ExperimentPlan other = default_plan(8);
  CHECK(other.qubits[5].params.ej_ghz != plan.qubits[5].params.ej_ghz);
}

TEST_CASE("plan validation rejects malformed cadences") {
  ExperimentPlan plan = default_plan(9, 2, 2);
  SECTION("empty qubits") {
    plan.qubits.clear();
    CHECK_THROWS_AS(validate(plan), ConfigError);
  }
  SECTION("duplicate labels") {
    plan.qubits[1].label = plan.qubits[0].label;
    CHECK_THROWS_AS(validate(plan), ConfigError);
  }
  SECTION("non-increasing sessions") {
    plan.session_hours = {1.0, 1.0};
    CHECK_THROWS_AS(validate(plan), ConfigError);
  }
  SECTION("zero cycles") {
    plan.n_cycles = 0;
    CHECK_THROWS_AS(validate(plan), ConfigError);
  }
  SECTION("narrow arch span") {
    plan.arch_flux_span_phi0 = 0.05;
    CHECK_THROWS_AS(validate(plan), ConfigError);
  }
}
