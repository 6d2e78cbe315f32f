#include "qmg/plant.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace qmg {

bool DgState::finite() const {
  return std::isfinite(delta) && std::isfinite(p_filt) && std::isfinite(q_filt) &&
         std::isfinite(d_omega) && std::isfinite(d_v);
}

bool NetworkModel::connected() const {
  if (n_bus <= 0) return false;
  if (n_bus == 1) return true;
  std::vector<bool> seen(static_cast<std::size_t>(n_bus), false);
  std::vector<int> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    int b = stack.back();
    stack.pop_back();
    for (const Line& l : lines) {
      int other = -1;
      if (l.from == b) other = l.to;
      if (l.to == b) other = l.from;
      if (other >= 0 && !seen[static_cast<std::size_t>(other)]) {
        seen[static_cast<std::size_t>(other)] = true;
        stack.push_back(other);
      }
    }
  }
  for (bool s : seen)
    if (!s) return false;
  return true;
}

void NetworkModel::validate() const {
  if (n_bus < 1) throw std::invalid_argument("network needs at least one bus");
  if (static_cast<int>(coupling_r.size()) != n_bus)
    throw std::invalid_argument("coupling resistance per bus required");
  if (static_cast<int>(loads.size()) != n_bus)
    throw std::invalid_argument("load slot per bus required");
  for (const Line& l : lines) {
    if (l.from < 0 || l.from >= n_bus || l.to < 0 || l.to >= n_bus || l.from == l.to)
      throw std::invalid_argument("line endpoints out of range");
    if (l.r < 0.0) throw std::invalid_argument("line resistance must be >= 0");
    if (std::hypot(l.r, l.x) <= 0.0) throw std::invalid_argument("line impedance must be nonzero");
  }
  for (double rc : coupling_r)
    if (rc <= 0.0) throw std::invalid_argument("coupling resistance must be > 0");
  for (const auto& load : loads) {
    if (load && load->r < 0.0) throw std::invalid_argument("load resistance must be >= 0");
    if (load && std::hypot(load->r, load->x) <= 0.0)
      throw std::invalid_argument("load impedance must be nonzero");
  }
  if (!connected()) throw std::invalid_argument("line graph must connect all buses");
}

DroopOutputs droop_outputs(const DgParams& params, const DgState& state) {
  DroopOutputs out;
  out.omega = params.omega_n - params.m_p * state.p_filt + state.d_omega;
  out.v = params.v_nom - params.n_q * state.q_filt + state.d_v;
  return out;
}

using Cx = std::complex<double>;

struct NetworkSolver::Impl {
  NetworkModel net;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu;
  std::vector<Cx> y_coupling;

  void factorize() {
    const int n = net.n_bus;
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const Line& l : net.lines) {
      Cx ya = 1.0 / Cx(l.r, l.x);
      y(l.from, l.from) += ya;
      y(l.to, l.to) += ya;
      y(l.from, l.to) -= ya;
      y(l.to, l.from) -= ya;
    }
    y_coupling.assign(static_cast<std::size_t>(n), Cx(0.0, 0.0));
    for (int b = 0; b < n; ++b) {
      y_coupling[static_cast<std::size_t>(b)] = 1.0 / Cx(net.coupling_r[static_cast<std::size_t>(b)], 0.0);
      y(b, b) += y_coupling[static_cast<std::size_t>(b)];
      if (net.loads[static_cast<std::size_t>(b)]) {
        const LoadZ& z = *net.loads[static_cast<std::size_t>(b)];
        y(b, b) += 1.0 / Cx(z.r, z.x);
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXcd> check(y);
    if (!check.isInvertible()) throw SingularNetwork("admittance system is singular");
    lu.compute(y);
  }
};

NetworkSolver::NetworkSolver(const NetworkModel& net) : impl_(std::make_unique<Impl>()) {
  net.validate();
  impl_->net = net;
  impl_->factorize();
}

NetworkSolver::~NetworkSolver() = default;
NetworkSolver::NetworkSolver(NetworkSolver&&) noexcept = default;
NetworkSolver& NetworkSolver::operator=(NetworkSolver&&) noexcept = default;

const NetworkModel& NetworkSolver::model() const { return impl_->net; }

PowerFlow NetworkSolver::solve(const std::vector<Cx>& dg_phasors) const {
  const int n = impl_->net.n_bus;
  if (static_cast<int>(dg_phasors.size()) != n)
    throw std::invalid_argument("one phasor per bus required");

  Eigen::VectorXcd rhs(n);
  for (int b = 0; b < n; ++b)
    rhs(b) = impl_->y_coupling[static_cast<std::size_t>(b)] * dg_phasors[static_cast<std::size_t>(b)];
  Eigen::VectorXcd v_bus = impl_->lu.solve(rhs);

  PowerFlow out;
  out.p.resize(static_cast<std::size_t>(n));
  out.q.resize(static_cast<std::size_t>(n));
  for (int b = 0; b < n; ++b) {
    Cx i_dg = (dg_phasors[static_cast<std::size_t>(b)] - v_bus(b)) *
              impl_->y_coupling[static_cast<std::size_t>(b)];
    Cx s = dg_phasors[static_cast<std::size_t>(b)] * std::conj(i_dg);
    out.p[static_cast<std::size_t>(b)] = s.real();
    out.q[static_cast<std::size_t>(b)] = s.imag();
  }
  return out;
}

PowerFlow solve_network(const NetworkModel& net,
                        const std::vector<std::pair<double, double>>& v_mag_angle) {
  NetworkSolver solver(net);
  std::vector<Cx> phasors;
  phasors.reserve(v_mag_angle.size());
  for (const auto& [mag, ang] : v_mag_angle) phasors.push_back(std::polar(mag, ang));
  return solver.solve(phasors);
}

PlantModel::PlantModel(std::vector<DgParams> params, NetworkModel net)
    : params_(std::move(params)), net_(std::move(net)), solver_(net_) {
  if (static_cast<int>(params_.size()) != net_.n_bus)
    throw std::invalid_argument("one parameter set per bus required");
  for (const DgParams& p : params_) {
    if (p.m_p <= 0 || p.n_q <= 0 || p.omega_n <= 0 || p.v_nom <= 0 || p.omega_c <= 0)
      throw std::invalid_argument("droop parameters must be positive");
  }
}

void PlantModel::set_load(int bus, std::optional<LoadZ> load) {
  net_.loads.at(static_cast<std::size_t>(bus)) = load;
  solver_ = NetworkSolver(net_);
}

PlantModel::Derivatives PlantModel::derivs(const std::vector<DgState>& states) const {
  const int n = n_dg();
  std::vector<Cx> phasors(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const DgState& s = states[static_cast<std::size_t>(i)];
    DroopOutputs d = droop_outputs(params_[static_cast<std::size_t>(i)], s);
    phasors[static_cast<std::size_t>(i)] = std::polar(d.v, s.delta);
  }
  PowerFlow pf = solver_.solve(phasors);

  Derivatives out;
  out.d_delta.resize(static_cast<std::size_t>(n));
  out.d_p.resize(static_cast<std::size_t>(n));
  out.d_q.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const DgParams& p = params_[static_cast<std::size_t>(i)];
    const DgState& s = states[static_cast<std::size_t>(i)];
    DroopOutputs d = droop_outputs(p, s);
    out.d_delta[static_cast<std::size_t>(i)] = d.omega - p.omega_n;
    out.d_p[static_cast<std::size_t>(i)] = p.omega_c * (pf.p[static_cast<std::size_t>(i)] - s.p_filt);
    out.d_q[static_cast<std::size_t>(i)] = p.omega_c * (pf.q[static_cast<std::size_t>(i)] - s.q_filt);
  }
  return out;
}

void PlantModel::step(std::vector<DgState>& states, double dt, double t_now) const {
  if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
  const int n = n_dg();
  if (static_cast<int>(states.size()) != n) throw std::invalid_argument("state count mismatch");

  auto advanced = [&](const std::vector<DgState>& base, const Derivatives& k, double h) {
    std::vector<DgState> next = base;
    for (int i = 0; i < n; ++i) {
      next[static_cast<std::size_t>(i)].delta += h * k.d_delta[static_cast<std::size_t>(i)];
      next[static_cast<std::size_t>(i)].p_filt += h * k.d_p[static_cast<std::size_t>(i)];
      next[static_cast<std::size_t>(i)].q_filt += h * k.d_q[static_cast<std::size_t>(i)];
    }
    return next;
  };

  Derivatives k1 = derivs(states);
  Derivatives k2 = derivs(advanced(states, k1, dt / 2.0));
  Derivatives k3 = derivs(advanced(states, k2, dt / 2.0));
  Derivatives k4 = derivs(advanced(states, k3, dt));

  for (int i = 0; i < n; ++i) {
    DgState& s = states[static_cast<std::size_t>(i)];
    s.delta += dt / 6.0 *
               (k1.d_delta[static_cast<std::size_t>(i)] + 2.0 * k2.d_delta[static_cast<std::size_t>(i)] +
                2.0 * k3.d_delta[static_cast<std::size_t>(i)] + k4.d_delta[static_cast<std::size_t>(i)]);
    s.p_filt += dt / 6.0 *
                (k1.d_p[static_cast<std::size_t>(i)] + 2.0 * k2.d_p[static_cast<std::size_t>(i)] +
                 2.0 * k3.d_p[static_cast<std::size_t>(i)] + k4.d_p[static_cast<std::size_t>(i)]);
    s.q_filt += dt / 6.0 *
                (k1.d_q[static_cast<std::size_t>(i)] + 2.0 * k2.d_q[static_cast<std::size_t>(i)] +
                 2.0 * k3.d_q[static_cast<std::size_t>(i)] + k4.d_q[static_cast<std::size_t>(i)]);
  }

  const double t_after = t_now + dt;
  for (const DgState& s : states) {
    if (!s.finite() || std::abs(s.delta) > kDivergenceCap || std::abs(s.p_filt) > kDivergenceCap ||
        std::abs(s.q_filt) > kDivergenceCap || std::abs(s.d_omega) > kDivergenceCap ||
        std::abs(s.d_v) > kDivergenceCap)
      throw Diverged("plant state left the admissible region", t_after);
  }
}

PlantModel::Measurements PlantModel::measure(const std::vector<DgState>& states) const {
  const int n = n_dg();
  std::vector<Cx> phasors(static_cast<std::size_t>(n));
  Measurements out;
  out.omega.resize(static_cast<std::size_t>(n));
  out.v.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    DroopOutputs d = droop_outputs(params_[static_cast<std::size_t>(i)], states[static_cast<std::size_t>(i)]);
    out.omega[static_cast<std::size_t>(i)] = d.omega;
    out.v[static_cast<std::size_t>(i)] = d.v;
    phasors[static_cast<std::size_t>(i)] = std::polar(d.v, states[static_cast<std::size_t>(i)].delta);
  }
  PowerFlow pf = solver_.solve(phasors);
  out.p_inst = std::move(pf.p);
  out.q_inst = std::move(pf.q);
  return out;
}

std::vector<DgState> step_physics(const std::vector<DgState>& states,
                                  const std::vector<DgParams>& params, const NetworkModel& net,
                                  double dt) {
  PlantModel plant(params, net);
  std::vector<DgState> next = states;
  plant.step(next, dt, 0.0);
  return next;
}

}  // namespace qmg
