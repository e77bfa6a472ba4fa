#include "postfault/gridsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <random>
#include <sstream>

#include <json.hpp>

#include "postfault/checkpoint.hpp"
#include "postfault/error.hpp"
#include "postfault/random.hpp"

namespace postfault {

namespace {

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

const cplx J(0.0, 1.0);

bool contains(const std::vector<std::size_t>& v, std::size_t x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

void stamp(MatrixXcd& y, std::size_t a, std::size_t b, cplx series, cplx shunt_each) {
  const auto i = static_cast<Eigen::Index>(a);
  const auto k = static_cast<Eigen::Index>(b);
  y(i, i) += series + shunt_each;
  y(k, k) += series + shunt_each;
  y(i, k) -= series;
  y(k, i) -= series;
}

}  // namespace

std::vector<std::size_t> GridModel::trippable() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < branches.size(); ++i) {
    if (branches[i].trippable) out.push_back(i);
  }
  return out;
}

MatrixXcd GridModel::bus_admittance(const std::vector<std::size_t>& tripped) const {
  const auto n = static_cast<Eigen::Index>(n_bus);
  MatrixXcd y = MatrixXcd::Zero(n, n);
  for (std::size_t i = 0; i < branches.size(); ++i) {
    if (contains(tripped, i)) continue;
    const Branch& br = branches[i];
    stamp(y, br.from, br.to, 1.0 / br.z, J * (br.b_shunt / 2.0));
  }
  return y;
}

bool GridModel::connected(const std::vector<std::size_t>& tripped) const {
  if (n_bus == 0) return true;
  std::vector<std::vector<std::size_t>> adj(n_bus);
  for (std::size_t i = 0; i < branches.size(); ++i) {
    if (contains(tripped, i)) continue;
    adj[branches[i].from].push_back(branches[i].to);
    adj[branches[i].to].push_back(branches[i].from);
  }
  std::vector<bool> seen(n_bus, false);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = true;
  std::size_t count = 1;
  while (!q.empty()) {
    auto a = q.front();
    q.pop();
    for (auto b : adj[a]) {
      if (!seen[b]) {
        seen[b] = true;
        ++count;
        q.push(b);
      }
    }
  }
  return count == n_bus;
}

GridModel GridModel::lossless() const {
  GridModel m = *this;
  for (auto& br : m.branches) br.z = cplx(0.0, br.z.imag());
  for (auto& y : m.y_load) y = cplx(0.0, y.imag());
  return m;
}

std::string GridModel::hash() const {
  nlohmann::json j;
  j["n_bus"] = n_bus;
  j["f0"] = f0;
  j["slack"] = slack;
  j["monitor_bus"] = monitor_bus;
  for (const auto& b : branches) {
    j["branches"].push_back({b.from, b.to, b.z.real(), b.z.imag(), b.b_shunt, b.trippable});
  }
  for (const auto& g : gens) j["gens"].push_back({g.bus, g.H, g.D, g.xd, g.p_set, g.v_set});
  for (const auto& l : loads) j["loads"].push_back({l.bus, l.s.real(), l.s.imag()});
  return content_hash(j.dump());
}

GridModel wscc9(const WsccOptions& opt) {
  if (!(opt.load_scale > 0.0)) throw ConfigError("load_scale must be positive");
  if (opt.damping < 0.0) throw ConfigError("damping must be non-negative");
  if (opt.monitor_bus >= 9) throw ConfigError("monitor bus out of range");

  GridModel m;
  m.n_bus = 9;
  m.f0 = 60.0;
  m.slack = 0;
  m.monitor_bus = opt.monitor_bus;

  struct Corridor {
    std::size_t a, b;
    double r, x, bc;
  };
  // 100 MVA base, buses numbered from zero
  const Corridor corridors[] = {{3, 4, 0.010, 0.085, 0.176},  {3, 5, 0.017, 0.092, 0.158},
                                {4, 6, 0.032, 0.161, 0.306},  {5, 8, 0.039, 0.170, 0.358},
                                {6, 7, 0.0085, 0.072, 0.149}, {7, 8, 0.0119, 0.1008, 0.209}};
  const int circuits = opt.double_circuit ? 2 : 1;
  for (const auto& c : corridors) {
    for (int k = 0; k < circuits; ++k) {
      Branch br;
      br.from = c.a;
      br.to = c.b;
      br.z = cplx(c.r, c.x) * static_cast<double>(circuits);
      br.b_shunt = c.bc / circuits;
      br.name = "L" + std::to_string(c.a + 1) + "-" + std::to_string(c.b + 1) +
                (opt.double_circuit ? std::string(1, static_cast<char>('a' + k)) : "");
      m.branches.push_back(br);
    }
  }
  const std::pair<std::size_t, std::size_t> xf_buses[] = {{0, 3}, {1, 6}, {2, 8}};
  const double xf_x[] = {0.0576, 0.0625, 0.0586};
  for (int i = 0; i < 3; ++i) {
    Branch br;
    br.from = xf_buses[i].first;
    br.to = xf_buses[i].second;
    br.z = cplx(0.0, xf_x[i]);
    br.name = "T" + std::to_string(br.from + 1) + "-" + std::to_string(br.to + 1);
    br.trippable = false;
    m.branches.push_back(br);
  }

  const double H[] = {23.64, 6.4, 3.01};
  const double xd[] = {0.0608, 0.1198, 0.1813};
  const double p[] = {0.0, 1.63, 0.85};
  const double v[] = {1.04, 1.025, 1.025};
  for (std::size_t i = 0; i < 3; ++i) {
    m.gens.push_back(Generator{i, H[i], opt.damping, xd[i], p[i] * opt.load_scale, v[i]});
  }
  m.loads = {{4, cplx(1.25, 0.5) * opt.load_scale},
             {5, cplx(0.9, 0.3) * opt.load_scale},
             {7, cplx(1.0, 0.35) * opt.load_scale}};
  initialize(m);
  return m;
}

void initialize(GridModel& m, double tol, int max_iter) {
  const std::size_t n = m.n_bus;
  if (m.gens.empty()) throw ConfigError("grid has no generators");
  const MatrixXcd Y = m.bus_admittance();

  std::vector<int> type(n, 0);  // 0 PQ, 1 PV, 2 slack
  VectorXd vm = VectorXd::Ones(static_cast<Eigen::Index>(n));
  VectorXd va = VectorXd::Zero(static_cast<Eigen::Index>(n));
  VectorXcd s_spec = VectorXcd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t g = 0; g < m.gens.size(); ++g) {
    const auto& gen = m.gens[g];
    type[gen.bus] = gen.bus == m.gens[m.slack].bus ? 2 : 1;
    vm(static_cast<Eigen::Index>(gen.bus)) = gen.v_set;
    if (g != m.slack) s_spec(static_cast<Eigen::Index>(gen.bus)) += gen.p_set;
  }
  for (const auto& l : m.loads) s_spec(static_cast<Eigen::Index>(l.bus)) -= l.s;

  std::vector<Eigen::Index> ang, mag;  // unknown angles (PV+PQ), magnitudes (PQ)
  for (std::size_t i = 0; i < n; ++i) {
    if (type[i] != 2) ang.push_back(static_cast<Eigen::Index>(i));
    if (type[i] == 0) mag.push_back(static_cast<Eigen::Index>(i));
  }
  const auto na = static_cast<Eigen::Index>(ang.size());
  const auto nm = static_cast<Eigen::Index>(mag.size());

  auto phasors = [&] {
    VectorXcd V(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < V.size(); ++i) V(i) = std::polar(vm(i), va(i));
    return V;
  };

  double residual = 0.0;
  for (int iter = 0; iter <= max_iter; ++iter) {
    VectorXcd V = phasors();
    VectorXcd I = Y * V;
    VectorXcd S = V.cwiseProduct(I.conjugate());
    VectorXd mis(na + nm);
    for (Eigen::Index k = 0; k < na; ++k) mis(k) = s_spec(ang[k]).real() - S(ang[k]).real();
    for (Eigen::Index k = 0; k < nm; ++k) mis(na + k) = s_spec(mag[k]).imag() - S(mag[k]).imag();
    residual = mis.cwiseAbs().maxCoeff();
    if (residual < tol) break;
    if (iter == max_iter) break;

    // dS/dVa = jV conj(I - Y V) written out per entry; dS/dVm = V conj(Y Vn) + conj(I) Vn
    VectorXcd Vn(V.size());
    for (Eigen::Index i = 0; i < V.size(); ++i) Vn(i) = V(i) / std::abs(V(i));
    MatrixXcd dS_dVa = -J * V.asDiagonal() * (Y * V.asDiagonal()).conjugate();
    dS_dVa.diagonal() += J * V.cwiseProduct(I.conjugate());
    MatrixXcd dS_dVm = V.asDiagonal() * (Y * Vn.asDiagonal()).conjugate();
    dS_dVm.diagonal() += I.conjugate().cwiseProduct(Vn);

    MatrixXd jac(na + nm, na + nm);
    for (Eigen::Index r = 0; r < na; ++r) {
      for (Eigen::Index c = 0; c < na; ++c) jac(r, c) = dS_dVa(ang[r], ang[c]).real();
      for (Eigen::Index c = 0; c < nm; ++c) jac(r, na + c) = dS_dVm(ang[r], mag[c]).real();
    }
    for (Eigen::Index r = 0; r < nm; ++r) {
      for (Eigen::Index c = 0; c < na; ++c) jac(na + r, c) = dS_dVa(mag[r], ang[c]).imag();
      for (Eigen::Index c = 0; c < nm; ++c) jac(na + r, na + c) = dS_dVm(mag[r], mag[c]).imag();
    }
    VectorXd dx = jac.partialPivLu().solve(mis);
    for (Eigen::Index k = 0; k < na; ++k) va(ang[k]) += dx(k);
    for (Eigen::Index k = 0; k < nm; ++k) vm(mag[k]) += dx(na + k);
  }
  if (!(residual < 1e-8)) {
    throw ConfigError("power flow did not converge (residual " + std::to_string(residual) + ")");
  }
  m.pf_residual = residual;

  VectorXcd V = phasors();
  VectorXcd S = V.cwiseProduct((Y * V).conjugate());
  m.v_eq.assign(V.data(), V.data() + V.size());
  m.y_load.assign(n, cplx(0.0, 0.0));
  for (const auto& l : m.loads) {
    m.y_load[l.bus] += std::conj(l.s) / std::norm(m.v_eq[l.bus]);
  }
  m.e_int.clear();
  m.p_m.clear();
  // Generator output is the bus injection plus whatever load sits on that bus.
  for (const auto& g : m.gens) {
    cplx sg = S(static_cast<Eigen::Index>(g.bus));
    for (const auto& l : m.loads) {
      if (l.bus == g.bus) sg += l.s;
    }
    const cplx vt = m.v_eq[g.bus];
    const cplx i = std::conj(sg / vt);
    m.e_int.push_back(vt + J * g.xd * i);
    m.p_m.push_back(sg.real());
  }
}

MatrixXcd extended_admittance(const GridModel& m, const std::vector<std::size_t>& tripped) {
  const auto ng = static_cast<Eigen::Index>(m.n_gen());
  const auto nb = static_cast<Eigen::Index>(m.n_bus);
  MatrixXcd y = MatrixXcd::Zero(ng + nb, ng + nb);
  MatrixXcd yb = m.bus_admittance(tripped);
  for (std::size_t i = 0; i < m.y_load.size(); ++i) {
    yb(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += m.y_load[i];
  }
  y.bottomRightCorner(nb, nb) = yb;
  for (std::size_t g = 0; g < m.n_gen(); ++g) {
    stamp(y, g, m.n_gen() + m.gens[g].bus, 1.0 / (J * m.gens[g].xd), 0.0);
  }
  return y;
}

ReducedNetwork kron_reduce(const GridModel& m, const std::vector<std::size_t>& tripped) {
  for (auto t : tripped) {
    if (t >= m.branches.size()) throw ScenarioRejected("unknown branch " + std::to_string(t));
  }
  if (!m.connected(tripped)) throw ScenarioRejected("tripping leaves the network disconnected");
  const auto ng = static_cast<Eigen::Index>(m.n_gen());
  const auto nb = static_cast<Eigen::Index>(m.n_bus);
  MatrixXcd y = extended_admittance(m, tripped);
  Eigen::FullPivLU<MatrixXcd> lu(y.bottomRightCorner(nb, nb));
  if (!lu.isInvertible()) throw ScenarioRejected("bus admittance block is singular");
  ReducedNetwork out;
  out.recovery = -lu.solve(y.bottomLeftCorner(nb, ng));
  out.y = y.topLeftCorner(ng, ng) + y.topRightCorner(ng, nb) * out.recovery;
  if (!out.y.allFinite() || !out.recovery.allFinite()) {
    throw ScenarioRejected("Kron reduction produced non-finite entries");
  }
  return out;
}

std::string to_string(FaultKind kind) { return kind == FaultKind::N1 ? "N1" : "N2"; }

FaultKind fault_kind_from_string(const std::string& s) {
  if (s == "N1") return FaultKind::N1;
  if (s == "N2") return FaultKind::N2;
  throw ConfigError("unknown fault kind '" + s + "'");
}

std::size_t FaultScenario::n_samples() const {
  return static_cast<std::size_t>(std::llround(T * sample_rate));
}

void FaultScenario::validate(const GridModel& model) const {
  const std::size_t want = kind == FaultKind::N1 ? 1 : 2;
  if (tripped.size() != want) {
    throw ConfigError(to_string(kind) + " scenario needs " + std::to_string(want) +
                      " tripped lines");
  }
  for (auto t : tripped) {
    if (t >= model.branches.size() || !model.branches[t].trippable) {
      throw ConfigError("branch " + std::to_string(t) + " cannot be tripped");
    }
  }
  if (want == 2 && tripped[0] == tripped[1]) throw ConfigError("tripped lines must differ");
  if (!(T > 0.0) || !(sample_rate > 0.0)) throw ConfigError("T and sample rate must be positive");
  if (!(t_f > 0.0) || !(t_cl > t_f)) throw ConfigError("need 0 < t_f < t_cl");
  if (n_samples() < 1) throw ConfigError("scenario produces no samples");
}

std::string FaultScenario::describe() const {
  std::ostringstream os;
  os << to_string(kind) << " trip{";
  for (std::size_t i = 0; i < tripped.size(); ++i) os << (i ? "," : "") << tripped[i];
  os << "} t_f=" << t_f << " t_cl=" << t_cl;
  return os.str();
}

SwingSystem SwingSystem::from(const GridModel& model, const ReducedNetwork& net) {
  SwingSystem s;
  s.y = net.y;
  s.f0 = model.f0;
  for (std::size_t i = 0; i < model.n_gen(); ++i) {
    s.e_mag.push_back(std::abs(model.e_int[i]));
    s.p_m.push_back(model.p_m[i]);
    s.H.push_back(model.gens[i].H);
    s.D.push_back(model.gens[i].D);
  }
  return s;
}

std::vector<double> SwingSystem::electrical_power(const std::vector<double>& delta) const {
  const std::size_t ng = n();
  std::vector<double> pe(ng, 0.0);
  for (std::size_t i = 0; i < ng; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < ng; ++j) {
      const cplx yij = y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const double dij = delta[i] - delta[j];
      acc += e_mag[j] * (yij.real() * std::cos(dij) + yij.imag() * std::sin(dij));
    }
    pe[i] = e_mag[i] * acc;
  }
  return pe;
}

std::vector<double> SwingSystem::derivative(const std::vector<double>& state) const {
  const std::size_t ng = n();
  std::vector<double> delta(state.begin(), state.begin() + static_cast<std::ptrdiff_t>(ng));
  std::vector<double> pe = electrical_power(delta);
  std::vector<double> d(2 * ng);
  for (std::size_t i = 0; i < ng; ++i) {
    const double w = state[ng + i];
    d[i] = w;
    d[ng + i] = std::numbers::pi * f0 / H[i] * (p_m[i] - pe[i] - D[i] * w);
  }
  return d;
}

void SwingSystem::rk4_step(std::vector<double>& x, double h) const {
  const std::size_t n2 = x.size();
  auto axpy = [&](const std::vector<double>& k, double a) {
    std::vector<double> out(n2);
    for (std::size_t i = 0; i < n2; ++i) out[i] = x[i] + a * k[i];
    return out;
  };
  const auto k1 = derivative(x);
  const auto k2 = derivative(axpy(k1, h / 2));
  const auto k3 = derivative(axpy(k2, h / 2));
  const auto k4 = derivative(axpy(k3, h));
  for (std::size_t i = 0; i < n2; ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

double SwingSystem::energy(const std::vector<double>& x) const {
  const std::size_t ng = n();
  double w = 0.0;
  for (std::size_t i = 0; i < ng; ++i) {
    const double omega = x[ng + i];
    w += 0.5 * H[i] / (std::numbers::pi * f0) * omega * omega;
    const double gii = y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)).real();
    w -= (p_m[i] - e_mag[i] * e_mag[i] * gii) * x[i];
    for (std::size_t j = i + 1; j < ng; ++j) {
      const double bij = y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)).imag();
      w -= e_mag[i] * e_mag[j] * bij * std::cos(x[i] - x[j]);
    }
  }
  return w;
}

void integrate(const SwingSystem& sys, std::vector<double>& state, double t0, double t1,
               double h) {
  if (!(t1 > t0)) return;
  const auto steps = static_cast<std::size_t>(std::ceil((t1 - t0) / h - 1e-9));
  const double dt = (t1 - t0) / static_cast<double>(std::max<std::size_t>(steps, 1));
  for (std::size_t k = 0; k < std::max<std::size_t>(steps, 1); ++k) sys.rk4_step(state, dt);
}

Trajectory simulate(const GridModel& model, const FaultScenario& sc, const SimOptions& opt) {
  sc.validate(model);
  if (!(opt.step > 0.0)) throw ConfigError("integration step must be positive");
  const std::size_t ng = model.n_gen();
  const ReducedNetwork pre = kron_reduce(model, {});
  const ReducedNetwork fault = kron_reduce(model, sc.tripped);
  const SwingSystem sys_pre = SwingSystem::from(model, pre);
  const SwingSystem sys_fault = SwingSystem::from(model, fault);

  std::vector<double> state(2 * ng, 0.0);
  for (std::size_t i = 0; i < ng; ++i) state[i] = std::arg(model.e_int[i]);

  const auto faulted = [&](double t) { return t >= sc.t_f && t < sc.t_cl; };
  const auto check_state = [&](double t) {
    double coi = 0.0, hsum = 0.0;
    for (std::size_t i = 0; i < ng; ++i) {
      if (!std::isfinite(state[i]) || !std::isfinite(state[ng + i])) {
        throw SimulationDiverged("non-finite machine state at t=" + std::to_string(t),
                                 sc.describe());
      }
      coi += model.gens[i].H * state[i];
      hsum += model.gens[i].H;
    }
    coi /= hsum;
    for (std::size_t i = 0; i < ng; ++i) {
      if (std::abs(state[i] - coi) > opt.max_angle) {
        throw SimulationDiverged("loss of synchronism at t=" + std::to_string(t), sc.describe());
      }
    }
  };

  Trajectory tr;
  tr.scenario = sc;
  tr.bus_id = model.monitor_bus;
  const std::size_t n = sc.n_samples();
  tr.times.resize(n);
  tr.values.resize(n);
  const auto mon = static_cast<Eigen::Index>(model.monitor_bus);

  double t = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double ts = static_cast<double>(k + 1) / sc.sample_rate;
    // split the interval at the switching instants that fall inside it
    std::vector<double> stops;
    for (double ev : {sc.t_f, sc.t_cl}) {
      if (ev > t && ev < ts) stops.push_back(ev);
    }
    stops.push_back(ts);
    for (double stop : stops) {
      const double mid = 0.5 * (t + stop);
      integrate(faulted(mid) ? sys_fault : sys_pre, state, t, stop, opt.step);
      t = stop;
      check_state(t);
    }
    t = ts;

    const ReducedNetwork& net = faulted(ts) ? fault : pre;
    Eigen::VectorXcd e(static_cast<Eigen::Index>(ng));
    for (std::size_t i = 0; i < ng; ++i) {
      e(static_cast<Eigen::Index>(i)) = std::polar(std::abs(model.e_int[i]), state[i]);
    }
    const double v = std::abs((net.recovery.row(mon) * e).value());
    if (!std::isfinite(v) || v <= 0.0 || v >= 2.0) {
      throw SimulationDiverged("monitor voltage " + std::to_string(v) + " out of range at t=" +
                                   std::to_string(ts),
                               sc.describe());
    }
    tr.times[k] = ts;
    tr.values[k] = v;
  }
  return tr;
}

std::vector<std::vector<std::size_t>> admissible_trips(const GridModel& model, FaultKind kind) {
  const auto cand = model.trippable();
  std::vector<std::vector<std::size_t>> out;
  if (kind == FaultKind::N1) {
    for (auto a : cand) {
      if (model.connected({a})) out.push_back({a});
    }
  } else {
    for (std::size_t i = 0; i < cand.size(); ++i) {
      for (std::size_t j = i + 1; j < cand.size(); ++j) {
        if (model.connected({cand[i], cand[j]})) out.push_back({cand[i], cand[j]});
      }
    }
  }
  return out;
}

namespace {

FaultScenario draw_scenario(Rng& rng, FaultKind kind,
                            const std::vector<std::vector<std::size_t>>& trips,
                            const ScenarioOptions& o) {
  std::uniform_int_distribution<std::size_t> pick(0, trips.size() - 1);
  std::uniform_real_distribution<double> dtf(o.dtf_min, o.dtf_max);
  FaultScenario s;
  s.kind = kind;
  s.tripped = trips[pick(rng)];
  s.t_cl = o.t_cl;
  s.t_f = o.t_cl - dtf(rng);
  s.T = o.T;
  s.sample_rate = o.sample_rate;
  return s;
}

void check_options(const ScenarioOptions& o) {
  if (!(o.dtf_min > 0.0) || !(o.dtf_max >= o.dtf_min) || !(o.t_cl - o.dtf_max > 0.0) ||
      !(o.T > o.t_cl)) {
    throw ConfigError("inconsistent scenario timing options");
  }
}

}  // namespace

std::vector<FaultScenario> sample_scenarios(const GridModel& model, std::size_t count,
                                            FaultKind kind, std::uint64_t seed,
                                            const ScenarioOptions& options) {
  if (count < 1) throw ContractError("count must be >= 1");
  check_options(options);
  const auto trips = admissible_trips(model, kind);
  if (trips.empty()) throw ConfigError("no admissible " + to_string(kind) + " trips");
  Rng rng = make_rng(seed, "scenarios." + to_string(kind));
  std::vector<FaultScenario> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(draw_scenario(rng, kind, trips, options));
  return out;
}

std::vector<Trajectory> generate_pool(const GridModel& model, std::size_t count, FaultKind kind,
                                      std::uint64_t seed, std::size_t retry_budget,
                                      PoolStats* stats, const ScenarioOptions& so,
                                      const SimOptions& sim, std::size_t first_id) {
  if (count < 1) throw ContractError("count must be >= 1");
  check_options(so);
  const auto trips = admissible_trips(model, kind);
  if (trips.empty()) throw ConfigError("no admissible " + to_string(kind) + " trips");
  // same stream as sample_scenarios, so the accepted set is its prefix when nothing diverges
  Rng rng = make_rng(seed, "scenarios." + to_string(kind));
  std::vector<Trajectory> out;
  out.reserve(count);
  PoolStats local;
  while (out.size() < count) {
    FaultScenario s = draw_scenario(rng, kind, trips, so);
    try {
      Trajectory t = simulate(model, s, sim);
      t.id = first_id + out.size();
      out.push_back(std::move(t));
      ++local.accepted;
    } catch (const SimulationDiverged&) {
      ++local.rejected;
      if (local.rejected > retry_budget) {
        if (stats) *stats = local;
        throw SimulationDiverged("retry budget of " + std::to_string(retry_budget) +
                                     " rejections exhausted",
                                 s.describe());
      }
    }
  }
  if (stats) *stats = local;
  return out;
}

}  // namespace postfault
