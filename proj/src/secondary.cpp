#include "qmg/secondary.hpp"

#include <cmath>
#include <stdexcept>

namespace qmg {

SecondaryRates secondary_rates(int x, const NeighborView& view, const LocalMeasurement& local,
                               double pin_gain, const ControlGains& gains,
                               const std::vector<DgParams>& droops) {
  const DgParams& own = droops.at(static_cast<std::size_t>(x));
  double freq_sum = pin_gain * (own.omega_n - local.omega);
  double volt_sum = 0.0;
  for (std::size_t y = 0; y < view.size(); ++y) {
    if (!view[y]) continue;
    const NeighborSample& nb = *view[y];
    const DgParams& theirs = droops.at(y);
    freq_sum += (nb.omega - local.omega) + (theirs.m_p * nb.p - own.m_p * local.p);
    volt_sum += theirs.n_q * nb.q - own.n_q * local.q;
  }
  return SecondaryRates{gains.k1 * freq_sum, gains.k2 * volt_sum};
}

DgState integrate_secondary(const DgState& state, const SecondaryRates& rates, double dt) {
  if (dt <= 0.0) throw std::invalid_argument("dt must be positive");
  DgState next = state;
  next.d_omega += rates.d_omega_rate * dt;
  next.d_v += rates.d_v_rate * dt;
  if (!std::isfinite(next.d_omega) || !std::isfinite(next.d_v))
    throw Diverged("secondary correction went non-finite", dt);
  return next;
}

}  // namespace qmg
