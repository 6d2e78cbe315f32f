#include "qmg/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "qmg/rng.hpp"
#include "qmg/secondary.hpp"

namespace qmg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kConvergedFreqBound = 1e-3;  // rad/s
constexpr double kConvergedSpreadBound = 1e-2;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string link_name(int tx, int rx) {
  return std::to_string(tx + 1) + ">" + std::to_string(rx + 1);
}

struct LinkRuntime {
  int tx = 0;
  int rx = 0;
  SecureLink channel;
  RandomStream stream;
  std::ostringstream csv;
  double qber_sum = 0.0;
  long qber_count = 0;

  LinkRuntime(int tx_dg, int rx_dg, std::size_t cap_bits, std::uint64_t seed)
      : tx(tx_dg),
        rx(rx_dg),
        channel(tx_dg, rx_dg, cap_bits),
        stream(seed, "qkd/link/" + link_name(tx_dg, rx_dg)) {}
};

struct LoopResult {
  // Calibration maxima over t >= transient.
  double max_dm1 = 0.0, max_dm2 = 0.0;
  double max_edge_r1 = 0.0, max_edge_r2 = 0.0;
  RunSummary summary;
};

/// One full co-simulation pass. `calibrating` collects clean-run metric
/// maxima and skips all output.
LoopResult simulate(const ScenarioConfig& cfg, const GuardConfig& guard_cfg, bool calibrating,
                    double duration, bool quiet) {
  const int n = cfg.n_dg;
  const double t_s = cfg.t_s;
  const int n_ticks = static_cast<int>(std::llround(duration / t_s));
  const int sub_steps = cfg.steps_per_cyber();
  const double dt = cfg.dt;

  std::vector<DgParams> params(static_cast<std::size_t>(n), cfg.dg);
  PlantModel plant(params, cfg.network);
  std::vector<DgState> states(static_cast<std::size_t>(n));

  double k1 = cfg.k_override ? *cfg.k_override
                             : cfg.gain_scale * consensus_gain(cfg.topology, cfg.pin);
  ControlGains gains{k1, k1};

  const bool armed = cfg.mode == QkdMode::fortified && !calibrating;
  Guard guard(cfg.topology, cfg.pin, guard_cfg, params, armed);

  const std::size_t cap_bits =
      static_cast<std::size_t>(cfg.key_buffer_frames) * static_cast<std::size_t>(kPayloadBits);
  std::vector<LinkRuntime> links;
  for (int rx = 0; rx < n; ++rx)
    for (int tx = 0; tx < n; ++tx)
      if (cfg.topology.at(rx, tx)) links.emplace_back(tx, rx, cap_bits, cfg.seed);

  std::vector<std::ostringstream> dg_csv(static_cast<std::size_t>(n));
  if (!calibrating) {
    for (auto& s : dg_csv) s << "t,omega,v,p,q,d_omega,d_v,dm1,dm2,active_matrix_id\n";
    for (auto& l : links) l.csv << "t,qber_estimate,delivered,stale\n";
  }

  std::vector<LoadStepCfg> pending_loads = cfg.load_steps;
  std::sort(pending_loads.begin(), pending_loads.end(),
            [](const LoadStepCfg& a, const LoadStepCfg& b) { return a.t < b.t; });
  std::size_t next_load = 0;

  LoopResult result;
  RunSummary& summary = result.summary;
  summary.n_dg = n;
  summary.onset_t = cfg.onset_time();
  summary.max_freq_dev_post_onset.assign(static_cast<std::size_t>(n), 0.0);
  summary.k1 = k1;
  summary.dm1_threshold = guard_cfg.dm1_threshold;
  summary.dm2_threshold = guard_cfg.dm2_threshold;
  summary.matrix_sequence.push_back(guard.active_id());

  const double transient = std::min(0.5, duration / 2.0);
  const double final_window = duration - std::min(0.5, duration);
  double max_p_spread = 0.0, max_q_spread = 0.0, max_final_dev = 0.0;

  std::vector<std::vector<std::optional<Triple>>> delivered(
      static_cast<std::size_t>(n), std::vector<std::optional<Triple>>(static_cast<std::size_t>(n)));
  std::vector<LocalMeasurement> locals(static_cast<std::size_t>(n));

  int rows = 0;
  try {
    for (int tick = 0; tick <= n_ticks; ++tick) {
      const double t = static_cast<double>(tick) * t_s;

      while (next_load < pending_loads.size() && pending_loads[next_load].t <= t) {
        plant.set_load(pending_loads[next_load].bus, pending_loads[next_load].load);
        ++next_load;
      }

      for (int x = 0; x < n; ++x) {
        DroopOutputs d = droop_outputs(params[static_cast<std::size_t>(x)], states[static_cast<std::size_t>(x)]);
        locals[static_cast<std::size_t>(x)] =
            LocalMeasurement{d.omega, states[static_cast<std::size_t>(x)].p_filt,
                             states[static_cast<std::size_t>(x)].q_filt};
      }

      for (auto& row : delivered) std::fill(row.begin(), row.end(), std::nullopt);

      for (LinkRuntime& link : links) {
        // Effective eavesdropper on this link at this instant; overlapping
        // windows compose as independent interception chances.
        double p_miss = 1.0;
        for (const EveAttackCfg& atk : cfg.eve_attacks) {
          if (calibrating || !atk.model.active_at(t)) continue;
          for (const auto& [atx, arx] : atk.links)
            if (atx == link.tx && arx == link.rx) p_miss *= 1.0 - atk.model.p_intercept;
        }
        EveModel eve;
        if (p_miss < 1.0) {
          eve.kind = EveKind::intercept_resend;
          eve.p_intercept = 1.0 - p_miss;
        }

        std::optional<double> qber;
        try {
          QkdSessionResult session = run_session(cfg.qkd, eve, cfg.mode, link.stream);
          if (cfg.mode == QkdMode::baseline && session.qber_estimate) {
            qber = session.qber_estimate;
            link.qber_sum += *session.qber_estimate;
            ++link.qber_count;
            if (baseline_accept(session, cfg.qkd.qber_threshold) == KeyDecision::accept)
              link.channel.push_session_keys(session);
          } else {
            link.channel.push_session_keys(session);
          }
        } catch (const EmptySiftedKey&) {
          // Failed session: no key material this step.
        }

        // Combined node-level bias on the sender, if any window is open.
        NodeAttack combined;
        bool biased = false;
        if (!calibrating) {
          for (const NodeAttack& atk : cfg.node_attacks) {
            if (!atk.active_on(link.tx, t)) continue;
            combined.d_omega += atk.d_omega;
            combined.d_p += atk.d_p;
            combined.d_q += atk.d_q;
            biased = true;
          }
          combined.targets.insert(link.tx);
        }

        const LocalMeasurement& m = locals[static_cast<std::size_t>(link.tx)];
        std::optional<WireFrame> frame =
            link.channel.transmit(Triple{m.omega, m.p, m.q}, biased ? &combined : nullptr, t);
        bool ok = frame.has_value();
        if (ok)
          delivered[static_cast<std::size_t>(link.rx)][static_cast<std::size_t>(link.tx)] =
              link.channel.receive(*frame);
        if (!calibrating)
          link.csv << fmt(t) << ',' << (qber ? fmt(*qber) : "") << ',' << (ok ? 1 : 0) << ','
                   << (ok ? 0 : 1) << '\n';
      }

      Guard::StepOutcome outcome = guard.step(t, delivered, locals);

      if (calibrating && t >= transient) {
        for (const DetectionReport& r : outcome.reports) {
          result.max_dm1 = std::max(result.max_dm1, r.dm1);
          result.max_dm2 = std::max(result.max_dm2, r.dm2);
        }
        result.max_edge_r1 = std::max(result.max_edge_r1, outcome.max_edge_r1);
        result.max_edge_r2 = std::max(result.max_edge_r2, outcome.max_edge_r2);
      }

      if (!outcome.new_flags.empty()) {
        std::map<int, std::set<int>> by_consumer;
        for (const auto& [x, y] : outcome.new_flags) by_consumer[x].insert(y);
        for (const auto& [x, sources] : by_consumer) {
          summary.triggers.push_back(TriggerEvent{t, x, sources});
          if (summary.first_trigger_t < 0.0) summary.first_trigger_t = t;
        }
      }
      for (const DetectionReport& r : outcome.reports) {
        if (r.triggered) {
          ++summary.n_triggered_steps;
          break;
        }
      }
      if (outcome.matrix_changed && guard.active_id() != summary.matrix_sequence.back())
        summary.matrix_sequence.push_back(guard.active_id());

      for (int x = 0; x < n; ++x) {
        NeighborView view = guard.control_view(x);
        SecondaryRates rates = secondary_rates(x, view, locals[static_cast<std::size_t>(x)],
                                               cfg.pin.gains[static_cast<std::size_t>(x)], gains, params);
        states[static_cast<std::size_t>(x)] =
            integrate_secondary(states[static_cast<std::size_t>(x)], rates, t_s);
      }

      // Log the tick with the freshly updated control corrections.
      double tick_dev = 0.0;
      double p_min = kInf, p_max = -kInf, p_sum = 0.0;
      double q_min = kInf, q_max = -kInf, q_sum = 0.0;
      for (int x = 0; x < n; ++x) {
        const DgState& s = states[static_cast<std::size_t>(x)];
        const DgParams& p = params[static_cast<std::size_t>(x)];
        DroopOutputs d = droop_outputs(p, s);
        const DetectionReport& r = outcome.reports[static_cast<std::size_t>(x)];
        if (!calibrating) {
          dg_csv[static_cast<std::size_t>(x)]
              << fmt(t) << ',' << fmt(d.omega) << ',' << fmt(d.v) << ',' << fmt(s.p_filt) << ','
              << fmt(s.q_filt) << ',' << fmt(s.d_omega) << ',' << fmt(s.d_v) << ',' << fmt(r.dm1)
              << ',' << fmt(r.dm2) << ',' << guard.active_id() << '\n';
        }
        double dev = std::abs(d.omega - p.omega_n);
        if (!std::isfinite(dev)) dev = 1e12;
        if (t >= summary.onset_t)
          summary.max_freq_dev_post_onset[static_cast<std::size_t>(x)] =
              std::max(summary.max_freq_dev_post_onset[static_cast<std::size_t>(x)], dev);
        tick_dev = std::max(tick_dev, dev);
        double mp = p.m_p * s.p_filt, nq = p.n_q * s.q_filt;
        p_min = std::min(p_min, mp);
        p_max = std::max(p_max, mp);
        p_sum += mp;
        q_min = std::min(q_min, nq);
        q_max = std::max(q_max, nq);
        q_sum += nq;
      }
      ++rows;

      if (t >= final_window) {
        max_final_dev = std::max(max_final_dev, tick_dev);
        double p_mean = std::max(std::abs(p_sum / n), 1e-12);
        double q_mean = std::max(std::abs(q_sum / n), 1e-12);
        max_p_spread = std::max(max_p_spread, (p_max - p_min) / p_mean);
        max_q_spread = std::max(max_q_spread, (q_max - q_min) / q_mean);
      }

      if (!quiet && !calibrating && tick % 1000 == 0)
        std::fprintf(stderr, "t = %.3f / %.3f s\n", t, duration);

      if (tick < n_ticks)
        for (int i = 0; i < sub_steps; ++i)
          plant.step(states, dt, t + static_cast<double>(i) * dt);
    }
  } catch (const Diverged& d) {
    summary.diverged = true;
    summary.t_diverged = d.t;
    for (std::size_t x = 0; x < summary.max_freq_dev_post_onset.size(); ++x)
      summary.max_freq_dev_post_onset[x] = std::max(summary.max_freq_dev_post_onset[x], 1e12);
    if (!quiet && !calibrating)
      std::fprintf(stderr, "diverged at t = %.6f s\n", d.t);
  }

  summary.rows_per_dg = rows;
  summary.max_freq_dev_final = max_final_dev;
  summary.p_droop_spread = max_p_spread;
  summary.q_droop_spread = max_q_spread;
  summary.converged = !summary.diverged && max_final_dev < kConvergedFreqBound &&
                      max_p_spread < kConvergedSpreadBound && max_q_spread < kConvergedSpreadBound;
  summary.matrix_registry = guard.registry();
  summary.mitigation_failures = guard.mitigation_failures();
  for (const LinkRuntime& link : links)
    if (link.qber_count > 0)
      summary.link_mean_qber[link_name(link.tx, link.rx)] =
          link.qber_sum / static_cast<double>(link.qber_count);

  if (!calibrating) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    for (int x = 0; x < n; ++x) {
      std::ofstream out(fs::path(cfg.out_dir) / ("dg" + std::to_string(x + 1) + ".csv"),
                        std::ios::binary);
      out << dg_csv[static_cast<std::size_t>(x)].str();
    }
    for (LinkRuntime& link : links) {
      std::ofstream out(fs::path(cfg.out_dir) /
                            ("link_" + std::to_string(link.tx + 1) + "to" +
                             std::to_string(link.rx + 1) + ".csv"),
                        std::ios::binary);
      out << link.csv.str();
    }
  }
  summary.out_dir = cfg.out_dir;
  return result;
}

std::string matrix_rows(const AdjacencyMatrix& m) {
  std::string s;
  for (int x = 0; x < m.n; ++x) {
    if (x) s += ';';
    for (int y = 0; y < m.n; ++y) s += m.at(x, y) ? '1' : '0';
  }
  return s;
}

void write_summary_files(const ScenarioConfig& cfg, const RunSummary& s) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  std::ofstream txt(fs::path(cfg.out_dir) / "summary.txt", std::ios::binary);
  txt << "run summary\n";
  txt << "  mode:                " << (cfg.mode == QkdMode::baseline ? "baseline" : "fortified") << "\n";
  txt << "  seed:                " << cfg.seed << "\n";
  txt << "  duration:            " << fmt(cfg.duration) << " s (" << s.rows_per_dg << " rows per DG)\n";
  txt << "  converged:           " << (s.converged ? "yes" : "no")
      << "  (final 0.5 s: |omega-omega_n| < 1e-3 rad/s, droop spreads < 1 %)\n";
  txt << "  diverged:            " << (s.diverged ? "yes, t = " + fmt(s.t_diverged) + " s" : "no") << "\n";
  txt << "  onset:               " << fmt(s.onset_t) << " s\n";
  double dev_all = 0.0;
  for (double d : s.max_freq_dev_post_onset) dev_all = std::max(dev_all, d);
  txt << "  max |omega-omega_n|: " << fmt(dev_all) << " rad/s post-onset (DG 1: "
      << fmt(s.max_freq_dev_post_onset.empty() ? 0.0 : s.max_freq_dev_post_onset[0]) << ")\n";
  txt << "  droop spreads:       P " << fmt(100.0 * s.p_droop_spread) << " %, Q "
      << fmt(100.0 * s.q_droop_spread) << " % (final 0.5 s)\n";
  txt << "  consensus gain:      k1 = k2 = " << fmt(s.k1) << "\n";
  txt << "  thresholds:          dm1 " << fmt(s.dm1_threshold) << ", dm2 " << fmt(s.dm2_threshold) << "\n";
  if (s.triggers.empty()) {
    txt << "  triggers:            none\n";
  } else {
    txt << "  triggers:\n";
    for (const TriggerEvent& e : s.triggers) {
      txt << "    t = " << fmt(e.t) << " s, DG " << e.dg + 1 << " flagged sources {";
      bool first = true;
      for (int y : e.sources) {
        if (!first) txt << ", ";
        txt << y + 1;
        first = false;
      }
      txt << "}\n";
    }
  }
  txt << "  matrix sequence:     ";
  for (std::size_t i = 0; i < s.matrix_sequence.size(); ++i)
    txt << (i ? " -> " : "") << "S" << s.matrix_sequence[i];
  txt << "\n";
  for (const AdjacencyMatrix& m : s.matrix_registry)
    txt << "    S" << m.id << " = " << matrix_rows(m) << "\n";
  if (s.link_mean_qber.empty()) {
    txt << "  mean QBER:           not estimated\n";
  } else {
    txt << "  mean QBER per link:\n";
    for (const auto& [name, q] : s.link_mean_qber)
      txt << "    " << name << ": " << fmt(q) << "\n";
  }

  std::ofstream kv(fs::path(cfg.out_dir) / "summary.kv", std::ios::binary);
  kv << "converged=" << (s.converged ? 1 : 0) << "\n";
  kv << "diverged=" << (s.diverged ? 1 : 0) << "\n";
  kv << "t_diverged=" << fmt(s.t_diverged) << "\n";
  kv << "onset_t=" << fmt(s.onset_t) << "\n";
  kv << "max_freq_dev_post_onset=" << fmt(dev_all) << "\n";
  kv << "max_freq_dev_dg1_post_onset="
     << fmt(s.max_freq_dev_post_onset.empty() ? 0.0 : s.max_freq_dev_post_onset[0]) << "\n";
  kv << "max_freq_dev_final=" << fmt(s.max_freq_dev_final) << "\n";
  kv << "p_droop_spread_rel=" << fmt(s.p_droop_spread) << "\n";
  kv << "q_droop_spread_rel=" << fmt(s.q_droop_spread) << "\n";
  kv << "first_trigger_t=" << fmt(s.first_trigger_t) << "\n";
  kv << "n_triggers=" << s.triggers.size() << "\n";
  kv << "n_triggered_steps=" << s.n_triggered_steps << "\n";
  kv << "mitigation_failures=" << s.mitigation_failures << "\n";
  kv << "k1=" << fmt(s.k1) << "\n";
  kv << "dm1_threshold=" << fmt(s.dm1_threshold) << "\n";
  kv << "dm2_threshold=" << fmt(s.dm2_threshold) << "\n";
  kv << "rows_per_dg=" << s.rows_per_dg << "\n";
  {
    kv << "matrix_sequence=";
    for (std::size_t i = 0; i < s.matrix_sequence.size(); ++i)
      kv << (i ? ">" : "") << s.matrix_sequence[i];
    kv << "\n";
  }
  for (const auto& [name, q] : s.link_mean_qber) kv << "qber_mean_" << name << "=" << fmt(q) << "\n";
}

}  // namespace

RunSummary run(const ScenarioConfig& cfg, bool quiet) {
  GuardConfig gcfg;
  gcfg.debounce = cfg.guard.debounce;
  gcfg.recovery_hold = cfg.guard.recovery_hold;
  gcfg.arm_time = cfg.guard.arm_time;

  const bool needs_calibration =
      cfg.mode == QkdMode::fortified &&
      (!cfg.guard.dm1_threshold || !cfg.guard.dm2_threshold);
  if (needs_calibration) {
    // Clean rehearsal with the same seed: thresholds are a margin above the
    // largest metrics seen after the startup transient.
    double cal_duration = std::min(cfg.duration, 2.0);
    GuardConfig unarmed;
    LoopResult cal = simulate(cfg, unarmed, true, cal_duration, true);
    const double floor = 1e-6;
    gcfg.dm1_threshold = cfg.guard.dm1_threshold
                             ? *cfg.guard.dm1_threshold
                             : std::max(cfg.guard.calibration_margin * cal.max_dm1, floor);
    gcfg.dm2_threshold = cfg.guard.dm2_threshold
                             ? *cfg.guard.dm2_threshold
                             : std::max(cfg.guard.calibration_margin * cal.max_dm2, floor);
    gcfg.edge_dm1_threshold = std::max(cfg.guard.calibration_margin * cal.max_edge_r1, floor);
    gcfg.edge_dm2_threshold = std::max(cfg.guard.calibration_margin * cal.max_edge_r2, floor);
  } else if (cfg.mode == QkdMode::fortified) {
    gcfg.dm1_threshold = *cfg.guard.dm1_threshold;
    gcfg.dm2_threshold = *cfg.guard.dm2_threshold;
    gcfg.edge_dm1_threshold = *cfg.guard.dm1_threshold;
    gcfg.edge_dm2_threshold = *cfg.guard.dm2_threshold;
  }

  LoopResult res = simulate(cfg, gcfg, false, cfg.duration, quiet);
  write_summary_files(cfg, res.summary);
  return res.summary;
}

}  // namespace qmg
