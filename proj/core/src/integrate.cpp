#include "uqcont/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace uqcont {
namespace {

// Dormand-Prince 8(5,3) tableau (Hairer, Norsett & Wanner, DOP853).
namespace dp {
constexpr double c2 = 0.526001519587677318785587544488E-01, c3 = 0.789002279381515978178381316732E-01,
                 c4 = 0.118350341907227396726757197510E+00, c5 = 0.281649658092772603273242802490E+00,
                 c6 = 0.333333333333333333333333333333E+00, c7 = 0.25E+00,
                 c8 = 0.307692307692307692307692307692E+00, c9 = 0.651282051282051282051282051282E+00,
                 c10 = 0.6E+00, c11 = 0.857142857142857142857142857142E+00;
constexpr double b1 = 5.42937341165687622380535766363E-2, b6 = 4.45031289275240888144113950566E0,
                 b7 = 1.89151789931450038304281599044E0, b8 = -5.8012039600105847814672114227E0,
                 b9 = 3.1116436695781989440891606237E-1, b10 = -1.52160949662516078556178806805E-1,
                 b11 = 2.01365400804030348374776537501E-1, b12 = 4.47106157277725905176885569043E-2;
constexpr double bhh1 = 0.244094488188976377952755905512E+00, bhh2 = 0.733846688281611857341361741547E+00,
                 bhh3 = 0.220588235294117647058823529412E-01;
constexpr double er1 = 0.1312004499419488073250102996E-01, er6 = -0.1225156446376204440720569753E+01,
                 er7 = -0.4957589496572501915214079952E+00, er8 = 0.1664377182454986536961530415E+01,
                 er9 = -0.3503288487499736816886487290E+00, er10 = 0.3341791187130174790297318841E+00,
                 er11 = 0.8192320648511571246570742613E-01, er12 = -0.2235530786388629525884427845E-01;
constexpr double a21 = 5.26001519587677318785587544488E-2;
constexpr double a31 = 1.97250569845378994544595329183E-2, a32 = 5.91751709536136983633785987549E-2;
constexpr double a41 = 2.95875854768068491816892993775E-2, a43 = 8.87627564304205475450678981324E-2;
constexpr double a51 = 2.41365134159266685502369798665E-1, a53 = -8.84549479328286085344864962717E-1,
                 a54 = 9.24834003261792003115737966543E-1;
constexpr double a61 = 3.7037037037037037037037037037E-2, a64 = 1.70828608729473871279604482173E-1,
                 a65 = 1.25467687566822425016691814123E-1;
constexpr double a71 = 3.7109375E-2, a74 = 1.70252211019544039314978060272E-1,
                 a75 = 6.02165389804559606850219397283E-2, a76 = -1.7578125E-2;
constexpr double a81 = 3.70920001185047927108779319836E-2, a84 = 1.70383925712239993810214054705E-1,
                 a85 = 1.07262030446373284651809199168E-1, a86 = -1.53194377486244017527936158236E-2,
                 a87 = 8.27378916381402288758473766002E-3;
constexpr double a91 = 6.24110958716075717114429577812E-1, a94 = -3.36089262944694129406857109825E0,
                 a95 = -8.68219346841726006818189891453E-1, a96 = 2.75920996994467083049415600797E1,
                 a97 = 2.01540675504778934086186788979E1, a98 = -4.34898841810699588477366255144E1;
constexpr double a101 = 4.77662536438264365890433908527E-1, a104 = -2.48811461997166764192642586468E0,
                 a105 = -5.90290826836842996371446475743E-1, a106 = 2.12300514481811942347288949897E1,
                 a107 = 1.52792336328824235832596922938E1, a108 = -3.32882109689848629194453265587E1,
                 a109 = -2.03312017085086261358222928593E-2;
constexpr double a111 = -9.3714243008598732571704021658E-1, a114 = 5.18637242884406370830023853209E0,
                 a115 = 1.09143734899672957818500254654E0, a116 = -8.14978701074692612513997267357E0,
                 a117 = -1.85200656599969598641566180701E1, a118 = 2.27394870993505042818970056734E1,
                 a119 = 2.49360555267965238987089396762E0, a1110 = -3.0467644718982195003823669022E0;
constexpr double a121 = 2.27331014751653820792359768449E0, a124 = -1.05344954667372501984066689879E1,
                 a125 = -2.00087205822486249909675718444E0, a126 = -1.79589318631187989172765950534E1,
                 a127 = 2.79488845294199600508499808837E1, a128 = -2.85899827713502369474065508674E0,
                 a129 = -8.87285693353062954433549289258E0, a1210 = 1.23605671757943030647266201528E1,
                 a1211 = 6.43392746015763530355970484046E-1;
}  // namespace dp

constexpr double kSafety = 0.9;
constexpr double kFacMin = 0.333;  // largest allowed step shrink is 1/0.333
constexpr double kFacMax = 6.0;
constexpr double kBeta = 0.04;     // PI stabilisation exponent
constexpr double kUround = 2.3e-16;

/// Explicit DOP853 integrator over a flat state vector. The first
/// `controlled` components enter the error norm; the remainder are carried
/// along on the same steps.
class Dop853 {
 public:
  Dop853(std::size_t size, std::size_t controlled) : n_(size), nc_(controlled) {
    for (auto* k : {&k1_, &k2_, &k3_, &k4_, &k5_, &k6_, &k7_, &k8_, &k9_, &k10_, &tmp_, &ynew_}) k->resize(n_);
  }

  template <class Rhs>
  void run(Rhs&& f, std::vector<double>& y, double t_end, const IntegrationSettings& s, const StepMesh* replay,
           StepMesh& mesh, Trajectory* traj, std::size_t traj_size, long& accepted, long& rejected) {
    accepted = rejected = 0;
    mesh.nodes.clear();
    mesh.nodes.push_back(0.0);
    if (traj) record(*traj, 0.0, y, traj_size);
    if (t_end <= 0.0) throw std::invalid_argument("integration interval must be positive");

    if (replay) {
      if (replay->nodes.size() < 2 || replay->nodes.front() != 0.0 || replay->nodes.back() != 1.0)
        throw std::invalid_argument("replay mesh must start at 0 and end at 1");
      double t = 0.0;
      f(t, y.data(), k1_.data());
      for (std::size_t i = 1; i < replay->nodes.size(); ++i) {
        const double t_next = replay->nodes[i] * t_end;
        step(f, y, t, t_next - t);
        t = t_next;
        y.swap(ynew_);
        check_finite(y, t);
        ++accepted;
        mesh.nodes.push_back(replay->nodes[i]);
        if (traj) record(*traj, t, y, traj_size);
        if (i + 1 < replay->nodes.size()) f(t, y.data(), k1_.data());
      }
      return;
    }

    double t = 0.0;
    f(t, y.data(), k1_.data());
    double h = initial_step(f, y, t_end, s);
    double fac_old = 1e-4;
    bool reject = false;
    const double expo = 1.0 / 8.0 - kBeta * 0.2;
    long attempts = 0;
    int non_finite_retries = 0;
    while (true) {
      if (attempts++ > s.max_steps) {
        std::ostringstream msg;
        msg << "step limit " << s.max_steps << " exceeded at t = " << t;
        throw IntegrationError(IntegrationError::Kind::step_limit, t, msg.str());
      }
      if (0.1 * h <= std::abs(t) * kUround) {
        std::ostringstream msg;
        msg << "step size underflow at t = " << t;
        throw IntegrationError(IntegrationError::Kind::step_underflow, t, msg.str());
      }
      bool last = false;
      if (t + 1.01 * h >= t_end) {
        h = t_end - t;
        last = true;
      }
      step(f, y, t, h);
      const double err = h * error_norm(y);
      if (!std::isfinite(err)) {
        // Non-finite stage values: shrink aggressively and retry.
        h *= 0.1;
        reject = true;
        ++rejected;
        if (++non_finite_retries > 20) {
          std::ostringstream msg;
          msg << "non-finite state at t = " << t;
          throw IntegrationError(IntegrationError::Kind::non_finite, t, msg.str());
        }
        continue;
      }
      const double fac11 = std::pow(err, expo);
      double fac = fac11 / std::pow(fac_old, kBeta);
      fac = std::clamp(fac / kSafety, 1.0 / kFacMax, 1.0 / kFacMin);
      double h_new = h / fac;
      non_finite_retries = 0;
      if (err <= 1.0) {
        fac_old = std::max(err, 1e-4);
        ++accepted;
        t = last ? t_end : t + h;
        y.swap(ynew_);
        check_finite(y, t);
        mesh.nodes.push_back(last ? 1.0 : t / t_end);
        if (traj) record(*traj, t, y, traj_size);
        if (last) return;
        f(t, y.data(), k1_.data());
        if (reject) h_new = std::min(h_new, h);
        reject = false;
      } else {
        h_new = h / std::min(1.0 / kFacMin, fac11 / kSafety);
        reject = true;
        if (accepted > 0) ++rejected;
      }
      h = h_new;
    }
  }

 private:
  template <class Rhs>
  void step(Rhs& f, const std::vector<double>& y, double t, double h) {
    using namespace dp;
    const std::size_t n = n_;
    const double* yv = y.data();
    double* w = tmp_.data();
    for (std::size_t i = 0; i < n; ++i) w[i] = yv[i] + h * a21 * k1_[i];
    f(t + c2 * h, w, k2_.data());
    for (std::size_t i = 0; i < n; ++i) w[i] = yv[i] + h * (a31 * k1_[i] + a32 * k2_[i]);
    f(t + c3 * h, w, k3_.data());
    for (std::size_t i = 0; i < n; ++i) w[i] = yv[i] + h * (a41 * k1_[i] + a43 * k3_[i]);
    f(t + c4 * h, w, k4_.data());
    for (std::size_t i = 0; i < n; ++i) w[i] = yv[i] + h * (a51 * k1_[i] + a53 * k3_[i] + a54 * k4_[i]);
    f(t + c5 * h, w, k5_.data());
    for (std::size_t i = 0; i < n; ++i) w[i] = yv[i] + h * (a61 * k1_[i] + a64 * k4_[i] + a65 * k5_[i]);
    f(t + c6 * h, w, k6_.data());
    for (std::size_t i = 0; i < n; ++i)
      w[i] = yv[i] + h * (a71 * k1_[i] + a74 * k4_[i] + a75 * k5_[i] + a76 * k6_[i]);
    f(t + c7 * h, w, k7_.data());
    for (std::size_t i = 0; i < n; ++i)
      w[i] = yv[i] + h * (a81 * k1_[i] + a84 * k4_[i] + a85 * k5_[i] + a86 * k6_[i] + a87 * k7_[i]);
    f(t + c8 * h, w, k8_.data());
    for (std::size_t i = 0; i < n; ++i)
      w[i] = yv[i] + h * (a91 * k1_[i] + a94 * k4_[i] + a95 * k5_[i] + a96 * k6_[i] + a97 * k7_[i] + a98 * k8_[i]);
    f(t + c9 * h, w, k9_.data());
    for (std::size_t i = 0; i < n; ++i)
      w[i] = yv[i] + h * (a101 * k1_[i] + a104 * k4_[i] + a105 * k5_[i] + a106 * k6_[i] + a107 * k7_[i] +
                          a108 * k8_[i] + a109 * k9_[i]);
    f(t + c10 * h, w, k10_.data());
    for (std::size_t i = 0; i < n; ++i)
      w[i] = yv[i] + h * (a111 * k1_[i] + a114 * k4_[i] + a115 * k5_[i] + a116 * k6_[i] + a117 * k7_[i] +
                          a118 * k8_[i] + a119 * k9_[i] + a1110 * k10_[i]);
    f(t + c11 * h, w, k2_.data());  // stage 11 stored in k2
    for (std::size_t i = 0; i < n; ++i)
      w[i] = yv[i] + h * (a121 * k1_[i] + a124 * k4_[i] + a125 * k5_[i] + a126 * k6_[i] + a127 * k7_[i] +
                          a128 * k8_[i] + a129 * k9_[i] + a1210 * k10_[i] + a1211 * k2_[i]);
    f(t + h, w, k3_.data());  // stage 12 stored in k3
    for (std::size_t i = 0; i < n; ++i) {
      k4_[i] = b1 * k1_[i] + b6 * k6_[i] + b7 * k7_[i] + b8 * k8_[i] + b9 * k9_[i] + b10 * k10_[i] +
               b11 * k2_[i] + b12 * k3_[i];
      ynew_[i] = yv[i] + h * k4_[i];
    }
  }

  [[nodiscard]] double error_norm(const std::vector<double>& y) const {
    using namespace dp;
    double err5 = 0.0, err3 = 0.0;
    for (std::size_t i = 0; i < nc_; ++i) {
      const double sk = 1.0 / (atol_ + rtol_ * std::max(std::abs(y[i]), std::abs(ynew_[i])));
      double e = k4_[i] - bhh1 * k1_[i] - bhh2 * k9_[i] - bhh3 * k3_[i];
      e *= sk;
      err3 += e * e;
      e = er1 * k1_[i] + er6 * k6_[i] + er7 * k7_[i] + er8 * k8_[i] + er9 * k9_[i] + er10 * k10_[i] +
          er11 * k2_[i] + er12 * k3_[i];
      e *= sk;
      err5 += e * e;
    }
    double deno = err5 + 0.01 * err3;
    if (deno <= 0.0) deno = 1.0;
    return err5 / std::sqrt(static_cast<double>(nc_) * deno);
  }

  template <class Rhs>
  double initial_step(Rhs& f, const std::vector<double>& y, double t_end, const IntegrationSettings& s) {
    rtol_ = s.rel_tol;
    atol_ = s.abs_tol;
    double dnf = 0.0, dny = 0.0;
    for (std::size_t i = 0; i < nc_; ++i) {
      const double sk = atol_ + rtol_ * std::abs(y[i]);
      dnf += (k1_[i] / sk) * (k1_[i] / sk);
      dny += (y[i] / sk) * (y[i] / sk);
    }
    double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, t_end);
    for (std::size_t i = 0; i < n_; ++i) tmp_[i] = y[i] + h * k1_[i];
    f(h, tmp_.data(), k2_.data());
    double der2 = 0.0;
    for (std::size_t i = 0; i < nc_; ++i) {
      const double sk = atol_ + rtol_ * std::abs(y[i]);
      const double d = (k2_[i] - k1_[i]) / sk;
      der2 += d * d;
    }
    der2 = std::sqrt(der2) / h;
    const double der12 = std::max(std::abs(der2), std::sqrt(dnf));
    const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 1.0 / 8.0);
    return std::min({100.0 * h, h1, t_end});
  }

  static void check_finite(const std::vector<double>& y, double t) {
    for (const double v : y)
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << "non-finite state at t = " << t;
        throw IntegrationError(IntegrationError::Kind::non_finite, t, msg.str());
      }
  }

  static void record(Trajectory& traj, double t, const std::vector<double>& y, std::size_t size) {
    traj.times.push_back(t);
    traj.states.emplace_back(Eigen::Map<const Vec>(y.data(), static_cast<Eigen::Index>(size)));
  }

  std::size_t n_, nc_;
  double rtol_ = 1e-10, atol_ = 1e-12;
  std::vector<double> k1_, k2_, k3_, k4_, k5_, k6_, k7_, k8_, k9_, k10_, tmp_, ynew_;
};

void check_inputs(const SystemModel& model, ConstVecRef p, ConstVecRef x0, double T) {
  if (x0.size() != model.dimension()) throw std::invalid_argument("initial state has the wrong dimension");
  if (p.size() != model.num_parameters()) throw std::invalid_argument("parameter vector has the wrong length");
  if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("integration time must be positive and finite");
}

}  // namespace

StateResult integrate_state(const SystemModel& model, ConstVecRef p, ConstVecRef x0, double T,
                            const IntegrationSettings& settings, const StepMesh* replay) {
  check_inputs(model, p, x0, T);
  const auto n = static_cast<std::size_t>(model.dimension());
  const Vec params = p;
  auto f = [&](double, const double* y, double* dy) {
    Eigen::Map<const Vec> x(y, static_cast<Eigen::Index>(n));
    Eigen::Map<Vec> out(dy, static_cast<Eigen::Index>(n));
    model.rhs(x, params, out);
  };
  std::vector<double> y(x0.data(), x0.data() + n);
  StateResult result;
  Dop853 solver(n, n);
  solver.run(f, y, T, settings, replay, result.mesh, settings.dense_output ? &result.trajectory : nullptr, n,
             result.accepted, result.rejected);
  result.x_T = Eigen::Map<const Vec>(y.data(), static_cast<Eigen::Index>(n));
  return result;
}

AugmentedResult integrate_augmented(const SystemModel& model, ConstVecRef p, ConstVecRef x0, double T,
                                    const Mat& directions, const IntegrationSettings& settings,
                                    const StepMesh* replay) {
  check_inputs(model, p, x0, T);
  if (directions.rows() != model.num_parameters())
    throw std::invalid_argument("direction matrix must have one row per parameter");
  const Eigen::Index n = model.dimension();
  const Eigen::Index k = directions.cols();
  const auto total = static_cast<std::size_t>(n + n * n + n * k + 1);
  const Vec params = p;

  Mat a(n, n), fp(n, model.num_parameters()), forcing(n, k);
  auto f = [&](double, const double* y, double* dy) {
    Eigen::Map<const Vec> x(y, n);
    Eigen::Map<const Mat> h(y + n, n, n);
    Eigen::Map<Vec> dx(dy, n);
    Eigen::Map<Mat> dh(dy + n, n, n);
    model.rhs(x, params, dx);
    model.state_jacobian(x, params, a);
    dh.noalias() = a * h;
    if (k > 0) {
      Eigen::Map<const Mat> s(y + n + n * n, n, k);
      Eigen::Map<Mat> ds(dy + n + n * n, n, k);
      model.param_jacobian(x, params, fp);
      forcing.noalias() = fp * directions;
      ds.noalias() = a * s;
      ds += forcing;
    }
    dy[total - 1] = a.trace();
  };

  std::vector<double> y(total, 0.0);
  std::copy(x0.data(), x0.data() + n, y.begin());
  for (Eigen::Index i = 0; i < n; ++i) y[static_cast<std::size_t>(n + i * n + i)] = 1.0;

  AugmentedResult result;
  Dop853 solver(total, static_cast<std::size_t>(n));
  solver.run(f, y, T, settings, replay, result.mesh, settings.dense_output ? &result.trajectory : nullptr,
             static_cast<std::size_t>(n), result.accepted, result.rejected);
  result.x_T = Eigen::Map<const Vec>(y.data(), n);
  result.monodromy = Eigen::Map<const Mat>(y.data() + n, n, n);
  result.sensitivity = Eigen::Map<const Mat>(y.data() + n + n * n, n, k);
  result.trace_integral = y[total - 1];
  return result;
}

}  // namespace uqcont
