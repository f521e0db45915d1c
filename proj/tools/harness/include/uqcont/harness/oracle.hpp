#pragma once

// Brute-force check of margin branches: forced response curves traced on a
// grid of the uncertainty ball, compared bin by bin with the margins.

#include <string>
#include <vector>

#include "uqcont/continuation.hpp"
#include "uqcont/harness/config.hpp"

namespace uqcont::harness {

/// Uncertainty samples on `rings` concentric shells (outermost at R). For
/// M = 2 the shells are circles with `angles` equally spaced points; other M
/// use a Halton sequence projected onto the sphere. R = 0 gives the origin.
[[nodiscard]] std::vector<Vec> uncertainty_samples(int m, double R, int rings, int angles);

/// [x0; T; s] with eps = s * target at fixed lambda: the homotopy from a
/// reference orbit to the realized system at `target`.
class RayProblem final : public ZeroProblem {
 public:
  RayProblem(const UncertainSystem& system, Vec target, double lambda, Vec scale, IntegrationSettings integration);

  [[nodiscard]] int num_unknowns() const override { return n_ + 2; }
  [[nodiscard]] int num_equations() const override { return n_ + 1; }
  [[nodiscard]] Evaluation evaluate(const Vec& u, bool with_jacobian,
                                    const StepMesh* replay = nullptr) const override;
  [[nodiscard]] const Vec& scale() const override { return scale_; }
  [[nodiscard]] int parameter_index() const override { return n_ + 1; }
  [[nodiscard]] ContinuationPoint point(const Vec& u) const override;

 private:
  const UncertainSystem& system_;
  Vec target_;
  double lambda_;
  Vec scale_;
  IntegrationSettings integration_;
  int n_;
};

struct OracleSample {
  Vec eps;
  bool ok = false;
  std::string failure;
  Branch primary;
  std::vector<Branch> detached;  ///< response curves not connected to the primary one
};

struct EnvelopeBin {
  double lambda = 0.0;
  double oracle_max = 0.0, oracle_min = 0.0;
  double margin_max = 0.0, margin_min = 0.0;
  bool covered = false;  ///< margins present at this lambda
  bool near_fold = false;
  double violation = 0.0;  ///< relative amount by which the oracle leaves the margins
  double slack = 0.0;      ///< relative gap between margins and oracle extrema
};

struct EnvelopeReport {
  int samples = 0;
  int failures = 0;
  std::vector<std::string> failure_messages;
  int detached_samples = 0;
  double detached_lo = 0.0, detached_hi = 0.0;  ///< lambda band of detached curves (valid if detached_samples > 0)
  double max_violation = 0.0;
  double violation_lambda = 0.0;
  double max_slack = 0.0;  ///< outside fold neighbourhoods
  double slack_lambda = 0.0;
  int uncovered_bins = 0;
  std::vector<double> folds;
  std::vector<EnvelopeBin> bins;
  bool failure_fraction_ok = true;
  bool violation_ok = true;
  bool slack_ok = true;
  [[nodiscard]] bool passed() const { return failure_fraction_ok && violation_ok && slack_ok && uncovered_bins == 0; }
};

struct OracleInputs {
  const UncertainSystem* system = nullptr;
  double R = 0.0;
  double lambda_lo = 0.0, lambda_hi = 0.0;
  const Branch* reference_frc = nullptr;
  std::vector<const Branch*> margins;
  OracleSettings settings;
  ContinuationSettings continuation;
  IntegrationSettings integration;
  int threads = 1;
};

/// Traces the forced response curves of one uncertainty sample. Detached
/// curves are found by homotopy in eps from every orbit of the reference
/// curve at the probe frequencies.
[[nodiscard]] OracleSample trace_sample(const OracleInputs& in, const Vec& eps,
                                        const std::vector<ContinuationPoint>& probes);

/// Samples, traces and compares. Envelope values at each bin centre are
/// periodic orbits solved from the Hermite-interpolated branch states.
[[nodiscard]] EnvelopeReport grid_validate(const OracleInputs& in);

/// Envelope comparison of already traced samples.
[[nodiscard]] EnvelopeReport compare_envelopes(const OracleInputs& in, const std::vector<OracleSample>& samples);

}  // namespace uqcont::harness
