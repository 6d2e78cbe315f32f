#include "qmg/guard.hpp"

#include <algorithm>
#include <cmath>

namespace qmg {

std::pair<double, double> detection_metrics(int x, const NeighborView& view,
                                            const LocalMeasurement& local, double pin_gain,
                                            const std::vector<DgParams>& droops) {
  SecondaryRates rates = secondary_rates(x, view, local, pin_gain, ControlGains{1.0, 1.0}, droops);
  return {std::abs(rates.d_omega_rate), std::abs(rates.d_v_rate)};
}

bool sustained_exceedance(const std::vector<std::pair<double, double>>& dm_history,
                          const GuardConfig& cfg) {
  if (static_cast<int>(dm_history.size()) < cfg.debounce || cfg.debounce < 1) return false;
  for (std::size_t i = dm_history.size() - static_cast<std::size_t>(cfg.debounce);
       i < dm_history.size(); ++i) {
    bool over = !(dm_history[i].first <= cfg.dm1_threshold) ||
                !(dm_history[i].second <= cfg.dm2_threshold);
    if (!over) return false;
  }
  return true;
}

MitigationResult mitigate(const std::vector<bool>& node_flags,
                          const std::set<std::pair<int, int>>& edge_flags,
                          const AdjacencyMatrix& default_matrix, const PinningVector& pin) {
  const int n = default_matrix.n;
  MitigationResult out;
  out.matrix = default_matrix;
  out.matrix.id = 0;
  out.taint = AdjacencyMatrix(n);

  for (const auto& [x, y] : edge_flags) {
    out.matrix.set(x, y, 0);
    out.taint.set(x, y, 1);
  }

  bool any_node = std::any_of(node_flags.begin(), node_flags.end(), [](bool f) { return f; });
  if (any_node) {
    // Healthy node: prefer a pinned DG so the reference stays reachable.
    int b = -1;
    for (int i = 0; i < n; ++i)
      if (!node_flags[static_cast<std::size_t>(i)] && pin.gains[static_cast<std::size_t>(i)] > 0.0) {
        b = i;
        break;
      }
    if (b < 0) b = choose_healthy(node_flags);

    Perturbation pert = perturb_matrix(out.matrix, node_flags, b);
    out.matrix = pert.matrix;
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y)
        if (pert.taint.at(x, y)) out.taint.set(x, y, 1);
    out.proxy_source = b;

    // Consumers that lost a flagged source get its terms served by b,
    // provided they actually read b in the new topology.
    for (int x = 0; x < n; ++x) {
      if (x == b) continue;
      for (int y = 0; y < n; ++y) {
        if (!node_flags[static_cast<std::size_t>(y)]) continue;
        if (default_matrix.at(x, y) && !out.matrix.at(x, y) && out.matrix.at(x, b))
          out.substitutions.emplace_back(x, y);
      }
    }
  }

  out.valid = is_valid_topology(out.matrix, pin);
  return out;
}

Guard::Guard(AdjacencyMatrix default_matrix, PinningVector pin, GuardConfig cfg,
             std::vector<DgParams> droops, bool detect_and_mitigate)
    : n_(default_matrix.n),
      default_(std::move(default_matrix)),
      pin_(std::move(pin)),
      cfg_(cfg),
      droops_(std::move(droops)),
      armed_(detect_and_mitigate) {
  default_.validate();
  if (default_.id == 0) default_.id = 1;
  active_ = default_;
  edges_.resize(static_cast<std::size_t>(n_) * n_);
  agg_over_.assign(static_cast<std::size_t>(n_), 0);
  node_flags_.assign(static_cast<std::size_t>(n_), false);
  registry_.push_back(default_);
}

int Guard::register_matrix(const AdjacencyMatrix& m) {
  for (const AdjacencyMatrix& known : registry_)
    if (known.same_edges(m)) return known.id;
  AdjacencyMatrix entry = m;
  entry.id = static_cast<int>(registry_.size()) + 1;
  registry_.push_back(entry);
  return entry.id;
}

void Guard::apply_flag_state() {
  MitigationResult plan;
  try {
    plan = mitigate(node_flags_, edge_flags_, default_, pin_);
  } catch (const NoHealthyNode&) {
    ++mitigation_failures_;  // continue on the last valid matrix
    return;
  }
  if (!plan.valid) {
    ++mitigation_failures_;
    return;
  }
  plan.matrix.id = register_matrix(plan.matrix);
  active_ = plan.matrix;
  substitutions_ = plan.substitutions;
  proxy_source_ = plan.proxy_source;
}

Guard::StepOutcome Guard::step(double t,
                               const std::vector<std::vector<std::optional<Triple>>>& delivered,
                               const std::vector<LocalMeasurement>& local) {
  StepOutcome outcome;
  outcome.reports.resize(static_cast<std::size_t>(n_));
  live_ = armed_ && t >= cfg_.arm_time;

  // Raw bookkeeping and per-edge residuals over the default topology, so
  // severed links stay monitored and recovery can be sensed.
  bool all_quiet = true;
  for (int x = 0; x < n_; ++x) {
    for (int y = 0; y < n_; ++y) {
      if (!default_.at(x, y)) continue;
      EdgeState& e = edge(x, y);
      const std::optional<Triple>& frame = delivered[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)];
      if (frame) {
        e.raw = NeighborSample{frame->omega, frame->p, frame->q, true, 0};
        e.have_raw = true;
      } else if (e.have_raw) {
        e.raw.fresh = false;
        ++e.raw.age;
      }
      if (!e.have_raw) continue;

      const DgParams& theirs = droops_[static_cast<std::size_t>(y)];
      const DgParams& own = droops_[static_cast<std::size_t>(x)];
      const LocalMeasurement& me = local[static_cast<std::size_t>(x)];
      e.r1 = std::abs((e.raw.omega - me.omega) + (theirs.m_p * e.raw.p - own.m_p * me.p));
      e.r2 = std::abs(theirs.n_q * e.raw.q - own.n_q * me.q);
      outcome.max_edge_r1 = std::max(outcome.max_edge_r1, e.r1);
      outcome.max_edge_r2 = std::max(outcome.max_edge_r2, e.r2);

      // Negated form so a NaN residual (garbage decode) counts as exceedance.
      bool over = !(e.r1 <= cfg_.edge_dm1_threshold) || !(e.r2 <= cfg_.edge_dm2_threshold);
      if (live_ && over) {
        ++e.over_count;
        all_quiet = false;
      } else {
        e.over_count = 0;
        e.good = e.raw;
        e.have_good = true;
      }
    }
  }

  // Aggregate metrics over the active in-neighborhood, from raw samples.
  for (int x = 0; x < n_; ++x) {
    NeighborView raw_view(static_cast<std::size_t>(n_));
    for (int y = 0; y < n_; ++y)
      if (active_.at(x, y) && edge(x, y).have_raw) raw_view[static_cast<std::size_t>(y)] = edge(x, y).raw;
    auto [dm1, dm2] = detection_metrics(x, raw_view, local[static_cast<std::size_t>(x)],
                                        pin_.gains[static_cast<std::size_t>(x)], droops_);
    DetectionReport& report = outcome.reports[static_cast<std::size_t>(x)];
    report.dg = x;
    report.dm1 = dm1;
    report.dm2 = dm2;
    report.t = t;
    if (live_) {
      if (!(dm1 <= cfg_.dm1_threshold) || !(dm2 <= cfg_.dm2_threshold))
        ++agg_over_[static_cast<std::size_t>(x)];
      else
        agg_over_[static_cast<std::size_t>(x)] = 0;
      report.triggered = agg_over_[static_cast<std::size_t>(x)] >= cfg_.debounce;
    }
  }

  if (!live_) return outcome;

  // Confirm flags whose debounce ran out.
  bool flags_changed = false;
  for (int x = 0; x < n_; ++x) {
    for (int y = 0; y < n_; ++y) {
      if (!default_.at(x, y)) continue;
      if (edge(x, y).over_count >= cfg_.debounce && !edge_flags_.count({x, y})) {
        edge_flags_.insert({x, y});
        outcome.new_flags.emplace_back(x, y);
        flags_changed = true;
      }
    }
  }

  if (flags_changed) {
    // A source every default consumer flags is a node-level compromise;
    // anything else is treated as a tainted channel.
    for (int y = 0; y < n_; ++y) {
      bool all = true, any = false;
      for (int x = 0; x < n_; ++x) {
        if (!default_.at(x, y)) continue;
        any = true;
        if (!edge_flags_.count({x, y})) all = false;
      }
      node_flags_[static_cast<std::size_t>(y)] = any && all;
    }
    int previous = active_.id;
    apply_flag_state();
    outcome.matrix_changed = active_.id != previous;
  }

  for (int x = 0; x < n_; ++x) {
    DetectionReport& report = outcome.reports[static_cast<std::size_t>(x)];
    for (const auto& [cx, cy] : edge_flags_)
      if (cx == x) report.flagged_sources.insert(cy);
  }

  // Hysteresis back to the default matrix: a full quiet window after the
  // flagged condition clears.
  if (!active_.same_edges(default_)) {
    if (all_quiet)
      ++quiet_streak_;
    else
      quiet_streak_ = 0;
    if (quiet_streak_ >= cfg_.recovery_hold) {
      active_ = default_;
      edge_flags_.clear();
      std::fill(node_flags_.begin(), node_flags_.end(), false);
      substitutions_.clear();
      proxy_source_ = -1;
      quiet_streak_ = 0;
      for (EdgeState& e : edges_) e.over_count = 0;
      std::fill(agg_over_.begin(), agg_over_.end(), 0);
      outcome.matrix_changed = true;
    }
  } else {
    quiet_streak_ = 0;
  }

  return outcome;
}

NeighborView Guard::control_view(int x) const {
  NeighborView view(static_cast<std::size_t>(n_));
  for (int y = 0; y < n_; ++y) {
    if (!active_.at(x, y)) continue;
    const EdgeState& e = edge(x, y);
    if (!e.have_raw) continue;
    bool over = live_ && (!(e.r1 <= cfg_.edge_dm1_threshold) || !(e.r2 <= cfg_.edge_dm2_threshold));
    if (over) {
      if (e.have_good) {
        NeighborSample held = e.good;
        held.fresh = false;
        view[static_cast<std::size_t>(y)] = held;
      }
      // No vetted copy yet: the source is dropped from the view entirely.
    } else {
      view[static_cast<std::size_t>(y)] = e.raw;
    }
  }
  // Reconstruction proxies: terms of lost sources served by the healthy node.
  if (proxy_source_ >= 0) {
    for (const auto& [cx, cy] : substitutions_) {
      if (cx != x) continue;
      if (view[static_cast<std::size_t>(proxy_source_)]) {
        NeighborSample proxy = *view[static_cast<std::size_t>(proxy_source_)];
        proxy.fresh = false;
        view[static_cast<std::size_t>(cy)] = proxy;
      }
    }
  }
  return view;
}

}  // namespace qmg
