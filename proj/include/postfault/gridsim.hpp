#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace postfault {

using cplx = std::complex<double>;

/// One switchable circuit or transformer between two buses.
struct Branch {
  std::size_t from = 0;
  std::size_t to = 0;
  cplx z;                  // series impedance r + jx (pu)
  double b_shunt = 0.0;    // total line charging (pu), split between both ends
  std::string name;
  bool trippable = true;   // transformers are not
};

struct Generator {
  std::size_t bus = 0;
  double H = 1.0;       // inertia constant (s)
  double D = 0.0;       // damping (pu power per rad/s)
  double xd = 0.1;      // transient reactance (pu)
  double p_set = 0.0;   // scheduled output, ignored for the slack unit
  double v_set = 1.0;
};

struct Load {
  std::size_t bus = 0;
  cplx s;  // P + jQ consumed at nominal voltage (pu)
};

struct WsccOptions {
  double load_scale = 1.0;  // multiplies every load and scheduled generation
  double damping = 0.01;    // D_i for all machines
  std::size_t monitor_bus = 4;
  bool double_circuit = true;
};

/// Classical-model network. The operating point fields are filled by initialize().
struct GridModel {
  std::size_t n_bus = 0;
  double f0 = 60.0;
  std::size_t slack = 0;
  std::size_t monitor_bus = 0;
  std::vector<Branch> branches;
  std::vector<Generator> gens;
  std::vector<Load> loads;

  // operating point
  std::vector<cplx> v_eq;    // bus voltage phasors from the power flow
  std::vector<cplx> e_int;   // internal EMF phasors E_i
  std::vector<double> p_m;   // mechanical power = electrical output at equilibrium
  std::vector<cplx> y_load;  // constant-impedance load admittance per bus
  double pf_residual = 0.0;

  std::size_t n_gen() const noexcept { return gens.size(); }
  std::vector<std::size_t> trippable() const;
  /// Bus admittance matrix of the network with `tripped` branches removed (no loads, no machines).
  Eigen::MatrixXcd bus_admittance(const std::vector<std::size_t>& tripped = {}) const;
  bool connected(const std::vector<std::size_t>& tripped) const;
  /// Same network with zero series resistance and purely reactive loads.
  GridModel lossless() const;
  std::string hash() const;
};

/// Textbook 3-machine 9-bus system. With double_circuit each line corridor is
/// modelled as two identical circuits of twice the impedance and half the charging.
GridModel wscc9(const WsccOptions& options = {});

/// Solves the power flow and fills the operating point. Newton in polar form.
void initialize(GridModel& model, double tol = 1e-12, int max_iter = 50);

struct ReducedNetwork {
  Eigen::MatrixXcd y;         // n_gen x n_gen
  Eigen::MatrixXcd recovery;  // n_bus x n_gen, V_bus = recovery * E
};

/// Schur complement of the bus nodes out of the extended (internal + bus) network.
ReducedNetwork kron_reduce(const GridModel& model, const std::vector<std::size_t>& tripped);

/// Extended admittance matrix over [internal nodes; buses] including loads and machine reactances.
Eigen::MatrixXcd extended_admittance(const GridModel& model,
                                     const std::vector<std::size_t>& tripped);

enum class FaultKind { N1, N2 };
std::string to_string(FaultKind kind);
FaultKind fault_kind_from_string(const std::string& s);

struct FaultScenario {
  FaultKind kind = FaultKind::N1;
  std::vector<std::size_t> tripped;
  double t_f = 1.6;
  double t_cl = 2.0;
  double T = 9.0;
  double sample_rate = 100.0;

  /// A fault time at or beyond T means the fault never happens.
  void validate(const GridModel& model) const;
  std::string describe() const;
  std::size_t n_samples() const;
};

struct Trajectory {
  std::size_t id = 0;
  FaultScenario scenario;
  std::size_t bus_id = 0;
  std::vector<double> times;   // (k+1)/sample_rate
  std::vector<double> values;  // |V| at bus_id (pu)
};

/// Swing dynamics on one fixed reduced network.
struct SwingSystem {
  Eigen::MatrixXcd y;
  std::vector<double> e_mag;
  std::vector<double> p_m;
  std::vector<double> H;
  std::vector<double> D;
  double f0 = 60.0;

  static SwingSystem from(const GridModel& model, const ReducedNetwork& net);
  std::size_t n() const noexcept { return e_mag.size(); }
  std::vector<double> electrical_power(const std::vector<double>& delta) const;
  /// state = [delta_1..n, omega_1..n]
  std::vector<double> derivative(const std::vector<double>& state) const;
  void rk4_step(std::vector<double>& state, double h) const;
  /// Kinetic plus potential energy; conserved when D = 0 and the network is lossless.
  double energy(const std::vector<double>& state) const;
};

/// Integrates from t0 to t1 in equal substeps no longer than h.
void integrate(const SwingSystem& sys, std::vector<double>& state, double t0, double t1, double h);

struct SimOptions {
  double step = 1e-3;
  double max_angle = 3.141592653589793;  // loss of synchronism: |delta_i - delta_coi|
};

/// Post-fault trajectory at the monitor bus. Raises SimulationDiverged on
/// blow-up, loss of synchronism or a voltage outside (0, 2).
Trajectory simulate(const GridModel& model, const FaultScenario& scenario,
                    const SimOptions& options = {});

struct ScenarioOptions {
  double t_cl = 2.0;
  double dtf_min = 0.2;
  double dtf_max = 0.5;
  double T = 9.0;
  double sample_rate = 100.0;
};

/// All connectivity-preserving sets of one (N1) or two (N2) trippable branches.
std::vector<std::vector<std::size_t>> admissible_trips(const GridModel& model, FaultKind kind);

std::vector<FaultScenario> sample_scenarios(const GridModel& model, std::size_t count,
                                            FaultKind kind, std::uint64_t seed,
                                            const ScenarioOptions& options = {});

struct PoolStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

/// Samples and simulates until `count` scenarios are accepted, resampling
/// diverged ones; gives up with SimulationDiverged after `retry_budget` rejections.
std::vector<Trajectory> generate_pool(const GridModel& model, std::size_t count, FaultKind kind,
                                      std::uint64_t seed, std::size_t retry_budget,
                                      PoolStats* stats = nullptr,
                                      const ScenarioOptions& scenario_options = {},
                                      const SimOptions& sim_options = {},
                                      std::size_t first_id = 0);

}  // namespace postfault
