#pragma once

// Time integration of dx/dt = F(x, p) and of the augmented system
// (state, variational matrix H, parametric sensitivity S, trace of A).

#include <stdexcept>
#include <string>
#include <vector>

#include "uqcont/models.hpp"

namespace uqcont {

struct IntegrationSettings {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  long max_steps = 1'000'000;
  bool dense_output = false;  ///< keep the state at every accepted step
};

/// Accepted step end-points as fractions of the integration interval,
/// starting at 0 and ending at 1. Replaying a mesh reproduces the exact step
/// sequence for a different interval length or initial condition, which makes
/// the discrete flow map smooth in its inputs.
struct StepMesh {
  std::vector<double> nodes;
  [[nodiscard]] std::size_t steps() const noexcept { return nodes.empty() ? 0 : nodes.size() - 1; }
};

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
};

class IntegrationError : public std::runtime_error {
 public:
  enum class Kind { step_limit, non_finite, step_underflow };

  IntegrationError(Kind kind, double time_reached, const std::string& what)
      : std::runtime_error(what), kind_(kind), time_reached_(time_reached) {}

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] double time_reached() const noexcept { return time_reached_; }

 private:
  Kind kind_;
  double time_reached_;
};

struct StateResult {
  Vec x_T;
  StepMesh mesh;
  Trajectory trajectory;  ///< filled only with dense_output
  long accepted = 0;
  long rejected = 0;
};

struct AugmentedResult {
  Vec x_T;
  Mat monodromy;     ///< H(T), H(0) = I
  Mat sensitivity;   ///< S(T), S(0) = 0, one column per parameter direction
  double trace_integral = 0.0;  ///< integral of tr A over [0, T]
  StepMesh mesh;
  Trajectory trajectory;
  long accepted = 0;
  long rejected = 0;
};

/// Integrates the state over [0, T]. With `replay` the step sequence is taken
/// from the mesh instead of being chosen adaptively.
[[nodiscard]] StateResult integrate_state(const SystemModel& model, ConstVecRef p, ConstVecRef x0, double T,
                                          const IntegrationSettings& settings, const StepMesh* replay = nullptr);

/// Co-integrates state, H and S on the state's step sequence. `directions`
/// is P x K; column k defines dp/dtheta_k and S = dx/dtheta with
/// dS/dt = A S + (dF/dp) directions. Error control acts on the state only.
[[nodiscard]] AugmentedResult integrate_augmented(const SystemModel& model, ConstVecRef p, ConstVecRef x0, double T,
                                                  const Mat& directions, const IntegrationSettings& settings,
                                                  const StepMesh* replay = nullptr);

}  // namespace uqcont
