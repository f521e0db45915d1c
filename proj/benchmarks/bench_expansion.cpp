#include <benchmark/benchmark.h>

#include <memory>
#include <string>
#include <vector>

#include "uqcont/continuation.hpp"

namespace {

using namespace uqcont;

// Row 4a with the coupling removed and the second mass at rest, so every
// parameter after k1 and F1 is uncertain without influencing q1.
UncertainSystem dummy_extended(int m) {
  TwoModeParameters row{1, 1, 0.05, 0, 0.005, 1, 0, 1, 1, 0, 0.5, 0.03, 0};
  const std::vector<std::string> names{"k1", "F1", "c2", "k2", "alpha2", "c3", "k3", "alpha3"};
  UncertainSystem sys;
  sys.model = std::make_shared<TwoModeOscillator>();
  sys.metric = std::make_shared<CoordinateMetric>(0, "q1");
  sys.reference = two_mode_parameters(row, 0.8);
  for (int i = 0; i < m; ++i) sys.uncertainty.entries.push_back({names[static_cast<std::size_t>(i)]});
  return sys;
}

ContinuationPoint reference_point(const UncertainSystem& sys, double omega) {
  const Vec p = sys.realize(omega, Vec::Zero(sys.num_uncertain())).p;
  const auto res = solve_forced_orbit(*sys.model, *sys.metric, p, omega, IntegrationSettings{});
  ContinuationPoint pt;
  pt.x0 = res.orbit.x0;
  pt.period = res.orbit.period;
  pt.lambda = omega;
  pt.eps = Vec::Zero(sys.num_uncertain());
  pt.metric_value = res.orbit.metric_value;
  return pt;
}

// One Jacobian evaluation of the expansion problem at a marginal point.
void BM_ExpansionJacobian(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const UncertainSystem sys = dummy_extended(m);
  MarginOptions opt;
  const auto res = expand_uncertainty(sys, reference_point(sys, 0.8), 0.05, opt);
  if (res.marginal.empty()) {
    state.SkipWithError("expansion found no marginal point");
    return;
  }
  const auto& pt = res.marginal.front();
  const MarginLayout layout{sys.dimension(), m};
  Vec v(layout.size());
  v << pt.x0, pt.eps, pt.r, pt.period, pt.lambda;
  const MarginProblem problem(sys, MarginMode::expansion, v, margin_scale(sys, 0.05, opt, pt.x0), opt.integration);
  const Vec u = problem.reduce(v);
  for (auto _ : state) benchmark::DoNotOptimize(problem.evaluate(u, true));
}
BENCHMARK(BM_ExpansionJacobian)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

// Full expansion from the reference orbit to r = 0.05, reported per step.
void BM_ExpansionToLevel(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  const UncertainSystem sys = dummy_extended(m);
  const ContinuationPoint ref = reference_point(sys, 0.8);
  MarginOptions opt;
  std::size_t steps = 0;
  for (auto _ : state) {
    const auto res = expand_uncertainty(sys, ref, 0.05, opt);
    for (const auto& b : res.branches) steps += b.points.size();
  }
  state.counters["steps"] = benchmark::Counter(static_cast<double>(steps), benchmark::Counter::kAvgIterations);
  state.counters["time_per_step"] =
      benchmark::Counter(static_cast<double>(steps), benchmark::Counter::kIsRate | benchmark::Counter::kInvert);
}
BENCHMARK(BM_ExpansionToLevel)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
