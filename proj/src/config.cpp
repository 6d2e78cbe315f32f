#include "qmg/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace qmg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw ConfigError("trailing characters after number '" + v + "'", line);
    return d;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    throw ConfigError("expected a number, got '" + v + "'", line);
  }
}

long long to_int(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    long long i = std::stoll(v, &used);
    if (used != v.size()) throw ConfigError("trailing characters after integer '" + v + "'", line);
    return i;
  } catch (const ConfigError&) {
    throw;
  } catch (...) {
    throw ConfigError("expected an integer, got '" + v + "'", line);
  }
}

std::vector<std::string> split(const std::string& v, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(trim(item));
  if (!v.empty() && v.back() == sep) parts.push_back("");
  return parts;
}

int dg_index(const std::string& v, int n_dg, int line) {
  long long i = to_int(v, line);
  if (i < 1 || i > n_dg) throw ConfigError("DG index " + v + " out of range 1.." + std::to_string(n_dg), line);
  return static_cast<int>(i - 1);
}

struct RawLine {
  int line;
  std::string section;  // "" for global
  int block;            // block instance index for repeatable sections, -1 otherwise
  std::string key;
  std::string value;
};

bool repeatable(const std::string& section) {
  return section == "eve_attack" || section == "node_attack" || section == "load_step";
}

NetworkModel default_network(int n_dg, const DgParams& dg, double r_c) {
  // Ring of buses with alternating line types (1.5 mH + 0.1 ohm and
  // 0.5 mH + 0.07 ohm), reactances taken at nominal frequency.
  NetworkModel net;
  net.n_bus = n_dg;
  net.coupling_r.assign(static_cast<std::size_t>(n_dg), r_c);
  net.loads.assign(static_cast<std::size_t>(n_dg), std::nullopt);
  auto line = [&](int from, int to, bool type_one) {
    Line l;
    l.from = from;
    l.to = to;
    l.r = type_one ? 0.1 : 0.07;
    l.x = dg.omega_n * (type_one ? 1.5e-3 : 0.5e-3);
    net.lines.push_back(l);
  };
  if (n_dg == 2) {
    line(0, 1, true);
  } else {
    for (int b = 0; b < n_dg; ++b) line(b, (b + 1) % n_dg, b % 2 == 0);
  }
  return net;
}

}  // namespace

int ScenarioConfig::steps_per_cyber() const {
  double ratio = t_s / dt;
  return static_cast<int>(std::llround(ratio));
}

int ScenarioConfig::n_cyber_steps() const {
  return static_cast<int>(std::llround(duration / t_s));
}

double ScenarioConfig::onset_time() const {
  double onset = kInf;
  for (const auto& a : eve_attacks) onset = std::min(onset, a.model.t_start);
  for (const auto& a : node_attacks) onset = std::min(onset, a.t_start);
  if (!std::isfinite(onset)) onset = std::max(0.0, duration - 0.5);
  return onset;
}

ScenarioConfig parse_config(const std::string& text) {
  // Pass 1: split into (section, block, key, value) records.
  std::vector<RawLine> records;
  std::string section;
  int block = -1;
  std::vector<std::pair<std::string, int>> block_order;  // (section, line) per block instance
  {
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string line = raw;
      std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("unterminated section header", line_no);
        section = trim(line.substr(1, line.size() - 2));
        if (section != "plant" && section != "topology" && section != "qkd" &&
            section != "guard" && !repeatable(section))
          throw ConfigError("unknown section [" + section + "]", line_no);
        if (repeatable(section)) {
          block = static_cast<int>(block_order.size());
          block_order.emplace_back(section, line_no);
        } else {
          block = -1;
        }
        continue;
      }
      std::size_t eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line_no);
      RawLine rec;
      rec.line = line_no;
      rec.section = section;
      rec.block = repeatable(section) ? block : -1;
      rec.key = trim(line.substr(0, eq));
      rec.value = trim(line.substr(eq + 1));
      if (rec.key.empty()) throw ConfigError("empty key", line_no);
      if (rec.value.empty()) throw ConfigError("empty value for key '" + rec.key + "'", line_no);
      records.push_back(rec);
    }
  }

  ScenarioConfig cfg;
  bool have_duration = false;

  // Pass 2a: structural keys needed before the rest (node count, frequency).
  for (const RawLine& r : records) {
    if (r.section == "plant" && r.key == "n_dg") {
      long long n = to_int(r.value, r.line);
      if (n < 2 || n > 64) throw ConfigError("n_dg must be in 2..64", r.line);
      cfg.n_dg = static_cast<int>(n);
    }
    if (r.section == "plant" && r.key == "omega_n") {
      double w = to_double(r.value, r.line);
      if (w <= 0) throw ConfigError("omega_n must be positive", r.line);
      cfg.dg.omega_n = w;
    }
  }

  double r_c = 0.1;
  std::vector<Line> explicit_lines;
  std::vector<std::pair<int, LoadZ>> explicit_loads;
  std::vector<std::pair<int, int>> explicit_edges;
  std::vector<std::pair<int, double>> explicit_pins;
  bool topology_complete = true;

  struct EveBlock {
    EveAttackCfg cfg;
    int line;
    bool has_links = false, has_start = false;
  };
  struct NodeBlock {
    NodeAttack cfg;
    int line;
    bool has_targets = false, has_start = false;
  };
  struct LoadBlock {
    LoadStepCfg cfg;
    int line;
    bool has_bus = false, has_t = false;
    double r = 0.0, x = 0.0;
  };
  std::vector<EveBlock> eve_blocks;
  std::vector<NodeBlock> node_blocks;
  std::vector<LoadBlock> load_blocks;
  std::vector<int> block_slot(block_order.size(), -1);
  for (std::size_t i = 0; i < block_order.size(); ++i) {
    if (block_order[i].first == "eve_attack") {
      block_slot[i] = static_cast<int>(eve_blocks.size());
      eve_blocks.push_back({EveAttackCfg{}, block_order[i].second});
      eve_blocks.back().cfg.model.kind = EveKind::intercept_resend;
      eve_blocks.back().cfg.model.p_intercept = 1.0;
    } else if (block_order[i].first == "node_attack") {
      block_slot[i] = static_cast<int>(node_blocks.size());
      node_blocks.push_back({NodeAttack{}, block_order[i].second});
    } else {
      block_slot[i] = static_cast<int>(load_blocks.size());
      load_blocks.push_back({LoadStepCfg{}, block_order[i].second});
    }
  }

  for (const RawLine& r : records) {
    const std::string& k = r.key;
    const std::string& v = r.value;
    if (r.section.empty()) {
      if (k == "duration") {
        cfg.duration = to_double(v, r.line);
        have_duration = true;
      } else if (k == "dt") {
        cfg.dt = to_double(v, r.line);
      } else if (k == "t_s") {
        cfg.t_s = to_double(v, r.line);
      } else if (k == "mode") {
        if (v == "baseline")
          cfg.mode = QkdMode::baseline;
        else if (v == "fortified")
          cfg.mode = QkdMode::fortified;
        else
          throw ConfigError("mode must be 'baseline' or 'fortified'", r.line);
      } else if (k == "seed") {
        cfg.seed = static_cast<std::uint64_t>(to_int(v, r.line));
      } else if (k == "out_dir") {
        cfg.out_dir = v;
      } else {
        throw ConfigError("unknown key '" + k + "'", r.line);
      }
    } else if (r.section == "plant") {
      if (k == "n_dg" || k == "omega_n") {
        // handled in the structural pass
      } else if (k == "m_p") {
        cfg.dg.m_p = to_double(v, r.line);
      } else if (k == "n_q") {
        cfg.dg.n_q = to_double(v, r.line);
      } else if (k == "v_nom") {
        cfg.dg.v_nom = to_double(v, r.line);
      } else if (k == "omega_c") {
        cfg.dg.omega_c = to_double(v, r.line);
      } else if (k == "r_c") {
        r_c = to_double(v, r.line);
      } else if (k == "line") {
        auto parts = split(v, ',');
        if (parts.size() != 4) throw ConfigError("line needs 'from, to, r_ohm, l_henry'", r.line);
        Line l;
        l.from = dg_index(parts[0], cfg.n_dg, r.line);
        l.to = dg_index(parts[1], cfg.n_dg, r.line);
        l.r = to_double(parts[2], r.line);
        l.x = cfg.dg.omega_n * to_double(parts[3], r.line);
        explicit_lines.push_back(l);
      } else if (k == "load") {
        auto parts = split(v, ',');
        if (parts.size() != 3) throw ConfigError("load needs 'bus, r_ohm, x_ohm'", r.line);
        int bus = dg_index(parts[0], cfg.n_dg, r.line);
        explicit_loads.push_back({bus, LoadZ{to_double(parts[1], r.line), to_double(parts[2], r.line)}});
      } else {
        throw ConfigError("unknown key '" + k + "' in [plant]", r.line);
      }
    } else if (r.section == "topology") {
      if (k == "matrix") {
        if (v == "complete")
          topology_complete = true;
        else if (v == "edges")
          topology_complete = false;
        else
          throw ConfigError("matrix must be 'complete' or 'edges'", r.line);
      } else if (k == "edge") {
        auto parts = split(v, ',');
        if (parts.size() != 2) throw ConfigError("edge needs 'consumer, source'", r.line);
        topology_complete = false;
        explicit_edges.push_back({dg_index(parts[0], cfg.n_dg, r.line), dg_index(parts[1], cfg.n_dg, r.line)});
      } else if (k == "pin") {
        auto parts = split(v, ',');
        if (parts.size() != 2) throw ConfigError("pin needs 'node, gain'", r.line);
        explicit_pins.push_back({dg_index(parts[0], cfg.n_dg, r.line), to_double(parts[1], r.line)});
      } else if (k == "gain_scale") {
        cfg.gain_scale = to_double(v, r.line);
        if (cfg.gain_scale <= 0) throw ConfigError("gain_scale must be positive", r.line);
      } else if (k == "k1") {
        cfg.k_override = to_double(v, r.line);
        if (*cfg.k_override <= 0) throw ConfigError("k1 must be positive", r.line);
      } else {
        throw ConfigError("unknown key '" + k + "' in [topology]", r.line);
      }
    } else if (r.section == "qkd") {
      if (k == "n_raw") {
        long long n = to_int(v, r.line);
        if (n < 16) throw ConfigError("n_raw must be at least 16", r.line);
        cfg.qkd.n_raw = static_cast<int>(n);
      } else if (k == "sacrifice_fraction") {
        cfg.qkd.sacrifice_fraction = to_double(v, r.line);
        if (cfg.qkd.sacrifice_fraction < 0.0 || cfg.qkd.sacrifice_fraction >= 1.0)
          throw ConfigError("sacrifice_fraction must be in [0, 1)", r.line);
      } else if (k == "qber_threshold") {
        cfg.qkd.qber_threshold = to_double(v, r.line);
        if (cfg.qkd.qber_threshold < 0.0 || cfg.qkd.qber_threshold > 1.0)
          throw ConfigError("qber_threshold must be in [0, 1]", r.line);
      } else if (k == "p_noise") {
        cfg.qkd.p_noise = to_double(v, r.line);
        if (cfg.qkd.p_noise < 0.0 || cfg.qkd.p_noise > 1.0)
          throw ConfigError("p_noise must be in [0, 1]", r.line);
      } else if (k == "key_buffer_frames") {
        long long n = to_int(v, r.line);
        if (n < 1) throw ConfigError("key_buffer_frames must be at least 1", r.line);
        cfg.key_buffer_frames = static_cast<int>(n);
      } else {
        throw ConfigError("unknown key '" + k + "' in [qkd]", r.line);
      }
    } else if (r.section == "guard") {
      if (k == "dm1_threshold" || k == "dm2_threshold") {
        std::optional<double>& slot = k == "dm1_threshold" ? cfg.guard.dm1_threshold : cfg.guard.dm2_threshold;
        if (v == "auto") {
          slot.reset();
        } else {
          double d = to_double(v, r.line);
          if (d <= 0) throw ConfigError(k + " must be positive or 'auto'", r.line);
          slot = d;
        }
      } else if (k == "debounce") {
        long long n = to_int(v, r.line);
        if (n < 1) throw ConfigError("debounce must be at least 1", r.line);
        cfg.guard.debounce = static_cast<int>(n);
      } else if (k == "recovery_hold") {
        long long n = to_int(v, r.line);
        if (n < 1) throw ConfigError("recovery_hold must be at least 1", r.line);
        cfg.guard.recovery_hold = static_cast<int>(n);
      } else if (k == "calibration_margin") {
        cfg.guard.calibration_margin = to_double(v, r.line);
        if (cfg.guard.calibration_margin <= 1.0)
          throw ConfigError("calibration_margin must exceed 1", r.line);
      } else if (k == "arm_time") {
        cfg.guard.arm_time = to_double(v, r.line);
        if (cfg.guard.arm_time < 0) throw ConfigError("arm_time must be non-negative", r.line);
      } else {
        throw ConfigError("unknown key '" + k + "' in [guard]", r.line);
      }
    } else if (r.section == "eve_attack") {
      EveBlock& b = eve_blocks[static_cast<std::size_t>(block_slot[static_cast<std::size_t>(r.block)])];
      if (k == "links") {
        for (const std::string& item : split(v, ',')) {
          std::size_t gt = item.find('>');
          if (gt == std::string::npos) throw ConfigError("link must look like '1>2'", r.line);
          int tx = dg_index(trim(item.substr(0, gt)), cfg.n_dg, r.line);
          int rx = dg_index(trim(item.substr(gt + 1)), cfg.n_dg, r.line);
          if (tx == rx) throw ConfigError("link endpoints must differ", r.line);
          b.cfg.links.push_back({tx, rx});
        }
        b.has_links = true;
      } else if (k == "p_intercept") {
        b.cfg.model.p_intercept = to_double(v, r.line);
        if (b.cfg.model.p_intercept < 0.0 || b.cfg.model.p_intercept > 1.0)
          throw ConfigError("p_intercept must be in [0, 1]", r.line);
      } else if (k == "t_start") {
        b.cfg.model.t_start = to_double(v, r.line);
        b.has_start = true;
      } else if (k == "t_end") {
        b.cfg.model.t_end = to_double(v, r.line);
      } else {
        throw ConfigError("unknown key '" + k + "' in [eve_attack]", r.line);
      }
    } else if (r.section == "node_attack") {
      NodeBlock& b = node_blocks[static_cast<std::size_t>(block_slot[static_cast<std::size_t>(r.block)])];
      if (k == "targets") {
        for (const std::string& item : split(v, ','))
          b.cfg.targets.insert(dg_index(item, cfg.n_dg, r.line));
        b.has_targets = true;
      } else if (k == "d_omega") {
        b.cfg.d_omega = to_double(v, r.line);
      } else if (k == "d_p") {
        b.cfg.d_p = to_double(v, r.line);
      } else if (k == "d_q") {
        b.cfg.d_q = to_double(v, r.line);
      } else if (k == "t_start") {
        b.cfg.t_start = to_double(v, r.line);
        b.has_start = true;
      } else if (k == "t_end") {
        b.cfg.t_end = to_double(v, r.line);
      } else {
        throw ConfigError("unknown key '" + k + "' in [node_attack]", r.line);
      }
    } else if (r.section == "load_step") {
      LoadBlock& b = load_blocks[static_cast<std::size_t>(block_slot[static_cast<std::size_t>(r.block)])];
      if (k == "bus") {
        b.cfg.bus = dg_index(v, cfg.n_dg, r.line);
        b.has_bus = true;
      } else if (k == "r") {
        b.r = to_double(v, r.line);
      } else if (k == "x") {
        b.x = to_double(v, r.line);
      } else if (k == "t") {
        b.cfg.t = to_double(v, r.line);
        b.has_t = true;
      } else {
        throw ConfigError("unknown key '" + k + "' in [load_step]", r.line);
      }
    }
  }

  if (!have_duration) throw ConfigError("duration is required");
  if (cfg.duration <= 0) throw ConfigError("duration must be positive");
  if (cfg.dt <= 0 || cfg.t_s <= 0) throw ConfigError("dt and t_s must be positive");

  double ratio = cfg.t_s / cfg.dt;
  if (std::abs(ratio - std::llround(ratio)) > 1e-6 * ratio || std::llround(ratio) < 1)
    throw ConfigError("dt must divide t_s exactly");
  double steps = cfg.duration / cfg.t_s;
  if (std::abs(steps - std::llround(steps)) > 1e-6 * steps || std::llround(steps) < 1)
    throw ConfigError("duration must be a whole number of cyber steps");

  // Plant assembly.
  if (cfg.dg.m_p <= 0 || cfg.dg.n_q <= 0 || cfg.dg.v_nom <= 0 || cfg.dg.omega_c <= 0)
    throw ConfigError("droop parameters must be positive");
  if (r_c <= 0) throw ConfigError("r_c must be positive");
  if (explicit_lines.empty()) {
    cfg.network = default_network(cfg.n_dg, cfg.dg, r_c);
  } else {
    cfg.network.n_bus = cfg.n_dg;
    cfg.network.lines = explicit_lines;
    cfg.network.coupling_r.assign(static_cast<std::size_t>(cfg.n_dg), r_c);
    cfg.network.loads.assign(static_cast<std::size_t>(cfg.n_dg), std::nullopt);
  }
  if (explicit_loads.empty()) {
    cfg.network.loads[0] = LoadZ{25.0, 0.0};
    if (cfg.n_dg >= 3) cfg.network.loads[2] = LoadZ{25.0, 0.0};
  } else {
    for (const auto& [bus, z] : explicit_loads) cfg.network.loads[static_cast<std::size_t>(bus)] = z;
  }
  try {
    cfg.network.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("network: ") + e.what());
  }

  // Topology assembly.
  if (topology_complete) {
    cfg.topology = AdjacencyMatrix::complete(cfg.n_dg, 1);
  } else {
    cfg.topology = AdjacencyMatrix(cfg.n_dg, 1);
    for (const auto& [x, y] : explicit_edges) {
      if (x == y) throw ConfigError("self edges are not allowed");
      cfg.topology.set(x, y, 1);
    }
  }
  if (explicit_pins.empty()) {
    cfg.pin = PinningVector::single(cfg.n_dg, 0, 1.0);
  } else {
    cfg.pin.gains.assign(static_cast<std::size_t>(cfg.n_dg), 0.0);
    for (const auto& [node, gain] : explicit_pins) {
      if (gain < 0) throw ConfigError("pinning gains must be non-negative");
      cfg.pin.gains[static_cast<std::size_t>(node)] = gain;
    }
  }
  if (!cfg.pin.any_pinned()) throw ConfigError("at least one pinning gain must be positive");
  if (!is_valid_topology(cfg.topology, cfg.pin))
    throw ConfigError("topology cannot carry the reference to every DG");

  // Attack blocks.
  auto check_window = [&](double t0, double t1, int line) {
    if (t0 < 0.0 || t0 > cfg.duration) throw ConfigError("t_start outside [0, duration]", line);
    if (std::isfinite(t1) && (t1 <= t0 || t1 > cfg.duration))
      throw ConfigError("t_end must lie in (t_start, duration]", line);
  };
  for (EveBlock& b : eve_blocks) {
    if (!b.has_links) throw ConfigError("eve_attack needs 'links'", b.line);
    if (!b.has_start) throw ConfigError("eve_attack needs 't_start'", b.line);
    check_window(b.cfg.model.t_start, b.cfg.model.t_end, b.line);
    for (const auto& [tx, rx] : b.cfg.links)
      if (!cfg.topology.at(rx, tx))
        throw ConfigError("eavesdropped link " + std::to_string(tx + 1) + ">" +
                              std::to_string(rx + 1) + " is not part of the topology",
                          b.line);
    cfg.eve_attacks.push_back(b.cfg);
  }
  for (NodeBlock& b : node_blocks) {
    if (!b.has_targets) throw ConfigError("node_attack needs 'targets'", b.line);
    if (!b.has_start) throw ConfigError("node_attack needs 't_start'", b.line);
    check_window(b.cfg.t_start, b.cfg.t_end, b.line);
    cfg.node_attacks.push_back(b.cfg);
  }
  for (LoadBlock& b : load_blocks) {
    if (!b.has_bus) throw ConfigError("load_step needs 'bus'", b.line);
    if (!b.has_t) throw ConfigError("load_step needs 't'", b.line);
    if (b.cfg.t < 0.0 || b.cfg.t > cfg.duration)
      throw ConfigError("load_step time outside [0, duration]", b.line);
    if (b.r != 0.0 || b.x != 0.0) b.cfg.load = LoadZ{b.r, b.x};
    cfg.load_steps.push_back(b.cfg);
  }

  return cfg;
}

ScenarioConfig load_scenario_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace qmg
