// In-memory feeder model: buses, branches, loads, generators and the source,
// plus validation, per-unit conversion and radial topology services.
#pragma once

#include "seqopf/phase.hpp"

#include <algorithm>
#include <numbers>
#include <cmath>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace seqopf {

enum class Units { physical, per_unit };

struct Bus {
  std::string id;
  PhaseSet phases;
  std::string region;
  double vmin = 0.8;  // voltage magnitude bounds, p.u.
  double vmax = 1.2;
  bool bounded = true;  // false exempts the bus from voltage limits
  CMatrix shunt_y;      // |phases| x |phases|; siemens (physical) or p.u.
};

struct LineSegment {
  std::string id;
  std::string from;
  std::string to;
  PhaseSet phases;
  CMatrix z;  // |phases| x |phases|; ohms (physical) or p.u.
};

inline constexpr int kMinTap = -16;
inline constexpr int kMaxTap = 16;
inline constexpr double kTapStep = 0.00625;

inline double tap_ratio(int tap) { return 1.0 + kTapStep * tap; }

struct RegulatorBank {
  std::string id;
  std::string from;
  std::string to;
  PhaseSet phases;
  std::array<int, 3> taps{};  // indexed by phase letter
  CMatrix z_reg;              // zero matrix when the data gives none

  /// Per-phase ratio on the bank's phases, reduced ordering.
  RVector ratio() const {
    auto ph = phases.phases();
    RVector r(ph.size());
    for (std::size_t i = 0; i < ph.size(); ++i) r(i) = tap_ratio(taps[ph[i]]);
    return r;
  }

  /// ratio * ratio^T
  RMatrix ratio_outer() const {
    RVector r = ratio();
    return r * r.transpose();
  }
};

enum class Connection { wye, delta };

struct ZipWeights {
  double z = 0.0;
  double i = 0.0;
  double p = 1.0;
};

/// Voltage-dependent load. For wye loads `s_nominal` is indexed by phase; for
/// delta loads by branch (0 = ab, 1 = bc, 2 = ca).  Positive values consume.
struct ZipLoad {
  std::string id;
  std::string bus;
  PhaseSet phases;
  Connection connection = Connection::wye;
  PhaseArray s_nominal{};
  ZipWeights zip;
  double v_floor = 0.85;
};

inline int delta_branch_second(int branch) { return (branch + 1) % 3; }

struct GeneratorCost {
  double a1 = 0.0;  // $/kWh
  double a2 = 0.0;  // $/kWh^2 on the three-phase total
};

struct DistributedGenerator {
  std::string id;
  std::string bus;
  PhaseSet phases;
  std::array<double, 3> p_max{};  // injection limits; negative p_min models charging
  std::array<double, 3> p_min{};
  double power_factor = 1.0;
  GeneratorCost cost;
  std::optional<double> balance_beta;

  double q_per_p() const { return std::tan(std::acos(power_factor)); }
};

struct SourceEquivalent {
  std::string bus;
  PhaseArray v_ref{cplx(1.0, 0.0), std::polar(1.0, -2.0 * std::numbers::pi / 3.0), std::polar(1.0, 2.0 * std::numbers::pi / 3.0)};
  double grid_price = 0.1;  // $/kWh
};

/// Reference to a line or regulator in a FeederModel.
struct BranchRef {
  enum class Kind { line, regulator } kind = Kind::line;
  int index = -1;

  bool is_regulator() const { return kind == Kind::regulator; }
  friend bool operator==(const BranchRef&, const BranchRef&) = default;
};

struct FeederModel {
  std::string name;
  Units units = Units::per_unit;
  double s_base_kva = 1000.0;  // three-phase base power
  std::map<std::string, double> region_kv;  // line-to-line base voltage per region

  std::vector<Bus> buses;
  std::vector<LineSegment> lines;
  std::vector<RegulatorBank> regulators;
  std::vector<ZipLoad> loads;
  std::vector<DistributedGenerator> generators;
  SourceEquivalent source;

  /// Base power of one phase in kVA.
  double phase_base_kva() const { return s_base_kva / 3.0; }

  int bus_index(const std::string& id) const {
    auto it = std::find_if(buses.begin(), buses.end(), [&](const Bus& b) { return b.id == id; });
    if (it == buses.end()) throw ModelError("unknown bus '" + id + "'");
    return static_cast<int>(it - buses.begin());
  }
  bool has_bus(const std::string& id) const {
    return std::any_of(buses.begin(), buses.end(), [&](const Bus& b) { return b.id == id; });
  }
  const Bus& bus(const std::string& id) const { return buses[bus_index(id)]; }

  int source_index() const { return bus_index(source.bus); }

  int branch_count() const { return static_cast<int>(lines.size() + regulators.size()); }

  std::vector<BranchRef> branches() const {
    std::vector<BranchRef> out;
    for (int i = 0; i < static_cast<int>(lines.size()); ++i) out.push_back({BranchRef::Kind::line, i});
    for (int i = 0; i < static_cast<int>(regulators.size()); ++i)
      out.push_back({BranchRef::Kind::regulator, i});
    return out;
  }

  const std::string& branch_id(BranchRef b) const {
    return b.is_regulator() ? regulators[b.index].id : lines[b.index].id;
  }
  const std::string& branch_from(BranchRef b) const {
    return b.is_regulator() ? regulators[b.index].from : lines[b.index].from;
  }
  const std::string& branch_to(BranchRef b) const {
    return b.is_regulator() ? regulators[b.index].to : lines[b.index].to;
  }
  PhaseSet branch_phases(BranchRef b) const {
    return b.is_regulator() ? regulators[b.index].phases : lines[b.index].phases;
  }
  const CMatrix& branch_z(BranchRef b) const {
    return b.is_regulator() ? regulators[b.index].z_reg : lines[b.index].z;
  }

  std::optional<BranchRef> find_branch(const std::string& id) const {
    for (auto b : branches())
      if (branch_id(b) == id) return b;
    return std::nullopt;
  }

  int generator_index(const std::string& id) const {
    for (std::size_t i = 0; i < generators.size(); ++i)
      if (generators[i].id == id) return static_cast<int>(i);
    throw ModelError("unknown generator '" + id + "'");
  }
};

// ---------------------------------------------------------------------------
// Validation

struct ValidationIssue {
  std::string location;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const { return issues.empty(); }

  bool mentions(const std::string& fragment) const {
    return std::any_of(issues.begin(), issues.end(), [&](const ValidationIssue& i) {
      return i.message.find(fragment) != std::string::npos || i.location.find(fragment) != std::string::npos;
    });
  }

  std::string str() const {
    std::ostringstream os;
    for (const auto& i : issues) os << i.location << ": " << i.message << "\n";
    return os.str();
  }
};

namespace detail {

inline bool is_symmetric(const CMatrix& m, double tol = 1e-12) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

}  // namespace detail

/// Lists every violated invariant; an empty report means the model is well formed.
inline ValidationReport validate_feeder(const FeederModel& model) {
  ValidationReport rep;
  auto add = [&](std::string loc, std::string msg) { rep.issues.push_back({std::move(loc), std::move(msg)}); };

  if (!(model.s_base_kva > 0.0)) add("meta", "base power must be positive");

  std::map<std::string, int> bus_pos;
  for (std::size_t i = 0; i < model.buses.size(); ++i) {
    const Bus& b = model.buses[i];
    std::string loc = "bus " + b.id;
    if (!bus_pos.emplace(b.id, static_cast<int>(i)).second) add(loc, "duplicate bus id");
    if (b.phases.empty()) add(loc, "empty phase set");
    if (!(b.vmin > 0.0 && b.vmin < b.vmax)) add(loc, "voltage bounds must satisfy 0 < vmin < vmax");
    if (model.units == Units::physical) {
      auto it = model.region_kv.find(b.region);
      if (it == model.region_kv.end()) add(loc, "missing base voltage for region '" + b.region + "'");
      else if (!(it->second > 0.0)) add(loc, "base voltage of region '" + b.region + "' must be positive");
    }
    if (b.shunt_y.size() > 0) {
      if (b.shunt_y.rows() != b.phases.size() || b.shunt_y.cols() != b.phases.size())
        add(loc, "shunt admittance dimension does not match phase count");
      else {
        if (!detail::is_symmetric(b.shunt_y)) add(loc, "shunt admittance is not symmetric");
        for (int k = 0; k < b.shunt_y.rows(); ++k)
          if (b.shunt_y(k, k).real() < 0.0) add(loc, "shunt conductance is negative");
      }
    }
  }

  auto bus_phases = [&](const std::string& id) -> std::optional<PhaseSet> {
    auto it = bus_pos.find(id);
    if (it == bus_pos.end()) return std::nullopt;
    return model.buses[it->second].phases;
  };

  std::set<std::string> branch_ids;
  auto check_branch = [&](const std::string& kind, const std::string& id, const std::string& from,
                          const std::string& to, PhaseSet phases, const CMatrix& z) {
    std::string loc = kind + " " + id;
    if (!branch_ids.insert(id).second) add(loc, "duplicate branch id");
    if (phases.empty()) add(loc, "empty phase set");
    auto fp = bus_phases(from);
    auto tp = bus_phases(to);
    if (!fp) add(loc, "unknown from-bus '" + from + "'");
    if (!tp) add(loc, "unknown to-bus '" + to + "'");
    if (fp && !phases.is_subset_of(*fp))
      add(loc, "phase set " + phases.str() + " is not a subset of upstream bus phases " + fp->str());
    if (tp && !(*tp == phases))
      add(loc, "downstream bus phases " + tp->str() + " differ from branch phases " + phases.str());
    if (from == to) add(loc, "not radial: self loop");
    if (z.rows() != phases.size() || z.cols() != phases.size())
      add(loc, "impedance dimension does not match phase count");
    else if (!detail::is_symmetric(z))
      add(loc, "impedance matrix is not symmetric");
  };
  for (const auto& l : model.lines) check_branch("line", l.id, l.from, l.to, l.phases, l.z);
  for (const auto& r : model.regulators) {
    check_branch("regulator", r.id, r.from, r.to, r.phases, r.z_reg);
    for (int p : r.phases.phases())
      if (r.taps[p] < kMinTap || r.taps[p] > kMaxTap)
        add("regulator " + r.id, "tap " + std::to_string(r.taps[p]) + " on phase " + phase_letter(p) +
                                     " outside [-16, 16]");
  }

  std::set<std::string> load_ids;
  for (const auto& ld : model.loads) {
    std::string loc = "load " + ld.id;
    if (!load_ids.insert(ld.id).second) add(loc, "duplicate load id");
    auto bp = bus_phases(ld.bus);
    if (!bp) add(loc, "unknown bus '" + ld.bus + "'");
    else if (!ld.phases.is_subset_of(*bp))
      add(loc, "load phases " + ld.phases.str() + " are not a subset of bus phases " + bp->str());
    if (ld.phases.empty()) add(loc, "empty phase set");
    if (ld.zip.z < 0 || ld.zip.i < 0 || ld.zip.p < 0) add(loc, "ZIP weights must be non-negative");
    if (std::abs(ld.zip.z + ld.zip.i + ld.zip.p - 1.0) > 1e-12) add(loc, "ZIP weights must sum to 1");
    if (!(ld.v_floor > 0.0 && ld.v_floor < 1.0)) add(loc, "v_floor must lie in (0, 1)");
    for (int k = 0; k < 3; ++k) {
      if (ld.s_nominal[k] == cplx(0.0)) continue;
      if (ld.connection == Connection::wye) {
        if (!ld.phases.contains(k)) add(loc, std::string("power given on phase ") + phase_letter(k) + " outside the load's phases");
      } else if (!ld.phases.contains(k) || !ld.phases.contains(delta_branch_second(k))) {
        add(loc, std::string("delta branch ") + phase_letter(k) + phase_letter(delta_branch_second(k)) +
                     " needs both phases");
      }
    }
  }

  std::set<std::string> gen_ids;
  for (const auto& g : model.generators) {
    std::string loc = "generator " + g.id;
    if (!gen_ids.insert(g.id).second) add(loc, "duplicate generator id");
    auto bp = bus_phases(g.bus);
    if (!bp) add(loc, "unknown bus '" + g.bus + "'");
    else if (!g.phases.is_subset_of(*bp))
      add(loc, "generator phases " + g.phases.str() + " are not a subset of bus phases " + bp->str());
    if (g.phases.empty()) add(loc, "empty phase set");
    for (int p : g.phases.phases()) {
      if (g.p_max[p] < 0.0 && g.p_min[p] >= 0.0) add(loc, "p_max must be non-negative");
      if (g.p_min[p] > g.p_max[p]) add(loc, "p_min exceeds p_max");
    }
    if (!(g.power_factor > 0.0 && g.power_factor <= 1.0)) add(loc, "power factor must lie in (0, 1]");
    if (g.cost.a2 < 0.0) add(loc, "quadratic cost coefficient must be non-negative");
    if (g.balance_beta) {
      if (!g.phases.is_three_phase()) add(loc, "balance band requires a three-phase generator");
      if (!(*g.balance_beta > 0.0 && *g.balance_beta < 1.0)) add(loc, "balance beta must lie in (0, 1)");
    }
  }

  // Source and radiality.
  auto src = bus_pos.find(model.source.bus);
  if (src == bus_pos.end()) {
    add("source", "source bus '" + model.source.bus + "' does not exist");
    return rep;
  }
  for (int p : model.buses[src->second].phases.phases())
    if (std::abs(model.source.v_ref[p]) <= 0.0)
      add("source", std::string("zero reference voltage on phase ") + phase_letter(p));

  std::map<std::string, std::vector<std::string>> parents;
  std::map<std::string, std::vector<std::string>> children;
  for (auto b : model.branches()) {
    const auto& f = model.branch_from(b);
    const auto& t = model.branch_to(b);
    if (!bus_pos.count(f) || !bus_pos.count(t)) continue;
    parents[t].push_back(model.branch_id(b));
    children[f].push_back(t);
  }
  if (!parents[model.source.bus].empty())
    add("bus " + model.source.bus, "not radial: source bus has an upstream branch");
  for (const auto& b : model.buses) {
    if (b.id == model.source.bus) continue;
    auto n = parents[b.id].size();
    if (n > 1) add("bus " + b.id, "not radial: " + std::to_string(n) + " parent branches");
  }
  std::set<std::string> seen{model.source.bus};
  std::queue<std::string> q;
  q.push(model.source.bus);
  while (!q.empty()) {
    auto cur = q.front();
    q.pop();
    for (const auto& nxt : children[cur])
      if (seen.insert(nxt).second) q.push(nxt);
  }
  for (const auto& b : model.buses)
    if (!seen.count(b.id)) {
      bool cyclic = parents[b.id].size() > 0;
      add("bus " + b.id, cyclic ? "not radial: bus lies on a cycle unreachable from the source"
                                : "disconnected: bus is not reachable from the source");
    }
  return rep;
}

// ---------------------------------------------------------------------------
// Per-unit conversion

namespace detail {

inline double z_base(const FeederModel& m, const std::string& region) {
  auto it = m.region_kv.find(region);
  if (it == m.region_kv.end()) throw ModelError("missing base voltage for region '" + region + "'");
  if (!(it->second > 0.0)) throw ModelError("base voltage of region '" + region + "' must be positive");
  return it->second * it->second * 1000.0 / m.s_base_kva;  // ohms, V_LL^2 / S_3ph
}

inline FeederModel rescale(const FeederModel& raw, bool to_pu) {
  if (!(raw.s_base_kva > 0.0)) throw ModelError("base power must be positive");
  FeederModel m = raw;
  const double sp = raw.phase_base_kva();
  const double pf = to_pu ? 1.0 / sp : sp;
  auto zb = [&](const std::string& bus_id) { return z_base(raw, raw.bus(bus_id).region); };
  for (auto& b : m.buses)
    if (b.shunt_y.size() > 0) b.shunt_y *= to_pu ? z_base(raw, b.region) : 1.0 / z_base(raw, b.region);
  for (auto& l : m.lines) l.z *= to_pu ? 1.0 / zb(l.from) : zb(l.from);
  for (auto& r : m.regulators) r.z_reg *= to_pu ? 1.0 / zb(r.from) : zb(r.from);
  for (auto& ld : m.loads)
    for (auto& s : ld.s_nominal) s *= pf;
  for (auto& g : m.generators)
    for (int p = 0; p < 3; ++p) {
      g.p_max[p] *= pf;
      g.p_min[p] *= pf;
    }
  m.units = to_pu ? Units::per_unit : Units::physical;
  return m;
}

}  // namespace detail

/// Converts a physical-unit model (ohms, siemens, kW/kvar per phase) to per
/// unit with Z_base = V_LL^2 / S_3ph and per-phase power base S_3ph / 3.
/// Models already in per unit are returned unchanged.
inline FeederModel to_per_unit(const FeederModel& raw) {
  if (raw.units == Units::per_unit) return raw;
  return detail::rescale(raw, true);
}

inline FeederModel to_physical(const FeederModel& pu) {
  if (pu.units == Units::physical) return pu;
  return detail::rescale(pu, false);
}

// ---------------------------------------------------------------------------
// Topology

/// Source-rooted traversal of a radial feeder.
struct TopologyOrder {
  std::vector<int> order;                        // breadth-first bus indices
  std::vector<int> parent_bus;                   // -1 for the source
  std::vector<std::optional<BranchRef>> parent_branch;
  std::vector<std::vector<BranchRef>> child_branches;
  std::vector<std::vector<BranchRef>> paths;     // source -> bus, ordered
  std::vector<std::vector<int>> downstream_generators;  // per bus

  const std::vector<BranchRef>& path(int bus) const { return paths[bus]; }
  const std::vector<int>& down(int bus) const { return downstream_generators[bus]; }

  /// Bus indices on the path from the source to `bus`, both ends included.
  std::vector<int> path_nodes(int bus) const {
    std::vector<int> out;
    for (int b = bus; b >= 0; b = parent_bus[b]) out.push_back(b);
    std::reverse(out.begin(), out.end());
    return out;
  }
};

inline TopologyOrder radial_order(const FeederModel& model) {
  const int n = static_cast<int>(model.buses.size());
  TopologyOrder t;
  t.parent_bus.assign(n, -1);
  t.parent_branch.assign(n, std::nullopt);
  t.child_branches.assign(n, {});
  t.paths.assign(n, {});
  t.downstream_generators.assign(n, {});

  std::unordered_map<std::string, int> pos;
  for (int i = 0; i < n; ++i) pos[model.buses[i].id] = i;
  auto lookup = [&](const std::string& id) {
    auto it = pos.find(id);
    if (it == pos.end()) throw ModelError("unknown bus '" + id + "'");
    return it->second;
  };

  for (auto b : model.branches()) {
    int f = lookup(model.branch_from(b));
    int to = lookup(model.branch_to(b));
    if (t.parent_branch[to]) throw ModelError("not radial: bus '" + model.buses[to].id + "' has two parents");
    t.parent_branch[to] = b;
    t.parent_bus[to] = f;
    t.child_branches[f].push_back(b);
  }
  const int src = lookup(model.source.bus);
  if (t.parent_branch[src]) throw ModelError("not radial: source bus has an upstream branch");

  std::vector<char> seen(n, 0);
  std::queue<int> q;
  q.push(src);
  seen[src] = 1;
  while (!q.empty()) {
    int cur = q.front();
    q.pop();
    t.order.push_back(cur);
    for (auto b : t.child_branches[cur]) {
      int nxt = lookup(model.branch_to(b));
      if (seen[nxt]) throw ModelError("not radial: cycle through bus '" + model.buses[nxt].id + "'");
      seen[nxt] = 1;
      t.paths[nxt] = t.paths[cur];
      t.paths[nxt].push_back(b);
      q.push(nxt);
    }
  }
  if (static_cast<int>(t.order.size()) != n) {
    for (int i = 0; i < n; ++i)
      if (!seen[i]) throw ModelError("disconnected bus '" + model.buses[i].id + "'");
  }

  for (std::size_t g = 0; g < model.generators.size(); ++g) {
    int at = lookup(model.generators[g].bus);
    for (int b = at; b >= 0; b = t.parent_bus[b]) t.downstream_generators[b].push_back(static_cast<int>(g));
  }
  for (auto& d : t.downstream_generators) std::sort(d.begin(), d.end());
  return t;
}

}  // namespace seqopf
