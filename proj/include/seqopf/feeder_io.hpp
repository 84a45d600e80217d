// Feeder documents (YAML) and report writers.
//
// A feeder document keeps the data as it appears on the feeder sheets:
// impedances in ohms per mile with lengths in feet (or plain ohms),
// transformers by rating and percent impedance, loads and generators in kW.
// build_model turns a document into a per-unit FeederModel.
#pragma once

#include "seqopf/load_iteration.hpp"
#include "seqopf/voltreg.hpp"

#include <yaml-cpp/yaml.h>

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace seqopf {

/// Malformed input.  `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(int line, std::string field, const std::string& msg)
      : Error(format(line, field, msg)), line_(line), field_(std::move(field)) {}

  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  static std::string format(int line, const std::string& field, const std::string& msg) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!field.empty()) out += field + ": ";
    return out + msg;
  }
  int line_ = 0;
  std::string field_;
};

inline constexpr int kSchemaVersion = 1;

/// Row-major complex matrix, each entry [re, im].
using ComplexTable = std::vector<std::vector<std::array<double, 2>>>;
using RealTable = std::vector<std::vector<double>>;

struct DocLineCode {
  std::string id;
  ComplexTable z_ohm_per_mile;
  RealTable b_us_per_mile;  // shunt susceptance, microsiemens per mile; may be empty
  friend bool operator==(const DocLineCode&, const DocLineCode&) = default;
};

struct DocBus {
  std::string id;
  std::string phases;
  std::string region;
  std::optional<double> vmin, vmax;
  bool bounded = true;
  friend bool operator==(const DocBus&, const DocBus&) = default;
};

struct DocLine {
  std::string id, from, to, phases;
  std::string code;               // line code reference, or empty
  std::optional<double> length_ft;
  ComplexTable z_ohm;             // direct impedance (no code)
  friend bool operator==(const DocLine&, const DocLine&) = default;
};

struct DocTransformer {
  std::string id, from, to, phases;
  double kva = 0.0, r_pct = 0.0, x_pct = 0.0;
  friend bool operator==(const DocTransformer&, const DocTransformer&) = default;
};

struct DocRegulator {
  std::string id, from, to, phases;
  std::array<int, 3> taps{};
  ComplexTable z_ohm;  // empty: ideal
  friend bool operator==(const DocRegulator&, const DocRegulator&) = default;
};

struct DocCapacitor {
  std::string id, bus, phases;
  std::array<double, 3> kvar{};
  friend bool operator==(const DocCapacitor&, const DocCapacitor&) = default;
};

struct DocLoad {
  std::string id, bus, phases;
  std::string connection = "wye";
  std::array<double, 3> zip{0.0, 0.0, 1.0};
  std::array<double, 3> kw{}, kvar{};  // wye: by phase; delta: ab, bc, ca
  std::optional<double> v_floor;
  friend bool operator==(const DocLoad&, const DocLoad&) = default;
};

struct DocGenerator {
  std::string id, bus, phases;
  std::array<double, 3> p_max_kw{}, p_min_kw{};
  double power_factor = 1.0;
  double a1 = 0.0, a2 = 0.0;
  std::optional<double> beta;
  friend bool operator==(const DocGenerator&, const DocGenerator&) = default;
};

struct DocSource {
  std::string bus;
  std::array<double, 3> v_pu{1.0, 1.0, 1.0};
  std::array<double, 3> angle_deg{0.0, -120.0, 120.0};
  double grid_price = 0.1;
  friend bool operator==(const DocSource&, const DocSource&) = default;
};

struct FeederDocument {
  int schema_version = kSchemaVersion;
  std::string name;
  double s_base_kva = 1000.0;
  std::map<std::string, double> v_base_kv;
  double vmin = 0.8, vmax = 1.2;  // defaults for buses without their own
  DocSource source;
  std::vector<DocLineCode> line_codes;
  std::vector<DocBus> buses;
  std::vector<DocLine> lines;
  std::vector<DocTransformer> transformers;
  std::vector<DocRegulator> regulators;
  std::vector<DocCapacitor> capacitors;
  std::vector<DocLoad> loads;
  std::vector<DocGenerator> generators;

  /// "kind id" -> source line of the item, for diagnostics.  Not part of the
  /// document's content.
  std::map<std::string, int> locations;

  bool operator==(const FeederDocument& o) const {
    return schema_version == o.schema_version && name == o.name && s_base_kva == o.s_base_kva &&
           v_base_kv == o.v_base_kv && vmin == o.vmin && vmax == o.vmax && source == o.source &&
           line_codes == o.line_codes && buses == o.buses && lines == o.lines && transformers == o.transformers &&
           regulators == o.regulators && capacitors == o.capacitors && loads == o.loads && generators == o.generators;
  }

  int location(const std::string& key) const {
    auto it = locations.find(key);
    return it == locations.end() ? 0 : it->second;
  }
};

namespace io_detail {

inline int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

[[noreturn]] inline void fail(const YAML::Node& n, const std::string& field, const std::string& msg) {
  throw ParseError(line_of(n), field, msg);
}

template <class T>
T as(const YAML::Node& n, const std::string& field) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    fail(n, field, "expected a " + std::string(std::is_same_v<T, std::string> ? "string"
                                                : std::is_integral_v<T>         ? "integer"
                                                : std::is_same_v<T, bool>       ? "boolean"
                                                                                : "number"));
  }
}

inline YAML::Node required(const YAML::Node& parent, const std::string& key, const std::string& ctx) {
  YAML::Node n = parent[key];
  if (!n) fail(parent, ctx.empty() ? key : ctx + "." + key, "missing required field");
  return n;
}

template <class T>
T get(const YAML::Node& parent, const std::string& key, const std::string& ctx) {
  return as<T>(required(parent, key, ctx), ctx.empty() ? key : ctx + "." + key);
}

template <class T>
std::optional<T> opt(const YAML::Node& parent, const std::string& key, const std::string& ctx) {
  YAML::Node n = parent[key];
  if (!n) return std::nullopt;
  return as<T>(n, ctx.empty() ? key : ctx + "." + key);
}

inline void check_keys(const YAML::Node& n, std::initializer_list<const char*> allowed, const std::string& ctx) {
  if (!n.IsMap()) fail(n, ctx, "expected a mapping");
  for (auto it = n.begin(); it != n.end(); ++it) {
    const std::string k = it->first.as<std::string>();
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) fail(it->first, ctx + "." + k, "unknown field");
  }
}

inline std::string phases_field(const YAML::Node& parent, const std::string& ctx) {
  YAML::Node n = required(parent, "phases", ctx);
  std::string s = as<std::string>(n, ctx + ".phases");
  try {
    PhaseSet p = PhaseSet::parse(s);
    if (p.empty()) fail(n, ctx + ".phases", "empty phase set");
  } catch (const ModelError& e) {
    fail(n, ctx + ".phases", e.what());
  }
  return s;
}

/// {a: x, b: y} keyed by phase letter.
inline std::array<double, 3> phase_map(const YAML::Node& n, const std::string& field) {
  std::array<double, 3> out{};
  if (!n.IsMap()) fail(n, field, "expected a mapping keyed by phase (a, b, c)");
  for (auto it = n.begin(); it != n.end(); ++it) {
    const std::string k = it->first.as<std::string>();
    if (k.size() != 1 || k[0] < 'a' || k[0] > 'c') fail(it->first, field, "unknown phase key '" + k + "'");
    out[k[0] - 'a'] = as<double>(it->second, field + "." + k);
  }
  return out;
}

/// {ab: x, bc: y, ca: z} keyed by delta branch.
inline std::array<double, 3> delta_map(const YAML::Node& n, const std::string& field) {
  std::array<double, 3> out{};
  if (!n.IsMap()) fail(n, field, "expected a mapping keyed by delta branch (ab, bc, ca)");
  for (auto it = n.begin(); it != n.end(); ++it) {
    const std::string k = it->first.as<std::string>();
    int idx = k == "ab" ? 0 : k == "bc" ? 1 : k == "ca" ? 2 : -1;
    if (idx < 0) fail(it->first, field, "unknown delta branch key '" + k + "'");
    out[idx] = as<double>(it->second, field + "." + k);
  }
  return out;
}

inline ComplexTable complex_table(const YAML::Node& n, const std::string& field, int dim) {
  if (!n.IsSequence() || static_cast<int>(n.size()) != dim)
    fail(n, field, "expected " + std::to_string(dim) + " rows");
  ComplexTable t;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const YAML::Node row = n[i];
    if (!row.IsSequence() || static_cast<int>(row.size()) != dim)
      fail(row, field, "row " + std::to_string(i + 1) + " must have " + std::to_string(dim) + " entries");
    std::vector<std::array<double, 2>> r;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const YAML::Node e = row[j];
      if (!e.IsSequence() || e.size() != 2) fail(e, field, "entries are [r, x] pairs");
      r.push_back({as<double>(e[0], field), as<double>(e[1], field)});
    }
    t.push_back(std::move(r));
  }
  return t;
}

inline RealTable real_table(const YAML::Node& n, const std::string& field, int dim) {
  if (!n.IsSequence() || static_cast<int>(n.size()) != dim)
    fail(n, field, "expected " + std::to_string(dim) + " rows");
  RealTable t;
  for (std::size_t i = 0; i < n.size(); ++i) {
    const YAML::Node row = n[i];
    if (!row.IsSequence() || static_cast<int>(row.size()) != dim)
      fail(row, field, "row " + std::to_string(i + 1) + " must have " + std::to_string(dim) + " entries");
    std::vector<double> r;
    for (std::size_t j = 0; j < row.size(); ++j) r.push_back(as<double>(row[j], field));
    t.push_back(std::move(r));
  }
  return t;
}

inline CMatrix to_matrix(const ComplexTable& t) {
  const Eigen::Index n = static_cast<Eigen::Index>(t.size());
  CMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = cplx(t[i][j][0], t[i][j][1]);
  return m;
}

inline RMatrix to_matrix(const RealTable& t) {
  const Eigen::Index n = static_cast<Eigen::Index>(t.size());
  RMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = t[i][j];
  return m;
}

inline YAML::Node load_yaml(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ParseError(e.mark.line >= 0 ? e.mark.line + 1 : 0, "", e.msg);
  }
}

inline void check_version(const YAML::Node& root) {
  YAML::Node v = root["schema_version"];
  if (!v) fail(root, "schema_version", "missing required field");
  const int ver = as<int>(v, "schema_version");
  if (ver != kSchemaVersion)
    fail(v, "schema_version", "unsupported version " + std::to_string(ver) + " (expected " + std::to_string(kSchemaVersion) + ")");
}

inline DocGenerator parse_generator(const YAML::Node& n, const std::string& ctx) {
  check_keys(n, {"id", "bus", "phases", "p_max_kw", "p_min_kw", "power_factor", "a1", "a2", "price", "charge_price",
                 "beta"},
             ctx);
  DocGenerator g;
  g.id = get<std::string>(n, "id", ctx);
  const std::string c = ctx + " " + g.id;
  g.bus = get<std::string>(n, "bus", c);
  g.phases = phases_field(n, c);
  g.p_max_kw = phase_map(required(n, "p_max_kw", c), c + ".p_max_kw");
  if (n["p_min_kw"]) g.p_min_kw = phase_map(n["p_min_kw"], c + ".p_min_kw");
  g.power_factor = opt<double>(n, "power_factor", c).value_or(1.0);
  const int prices = !!n["a1"] + !!n["price"] + !!n["charge_price"];
  if (prices > 1) fail(n, c, "give only one of a1, price, charge_price");
  if (n["a1"]) g.a1 = get<double>(n, "a1", c);
  if (n["price"]) g.a1 = get<double>(n, "price", c);
  if (n["charge_price"]) g.a1 = -get<double>(n, "charge_price", c);
  g.a2 = opt<double>(n, "a2", c).value_or(0.0);
  g.beta = opt<double>(n, "beta", c);
  return g;
}

}  // namespace io_detail

/// Parses a feeder document.  Structural problems are reported with the
/// offending line; cross references are checked by build_model.
inline FeederDocument parse_feeder_document(const std::string& text) {
  using namespace io_detail;
  YAML::Node root = load_yaml(text);
  if (!root.IsMap()) throw ParseError(1, "", "feeder document must be a mapping");
  check_keys(root, {"schema_version", "meta", "source", "line_codes", "buses", "lines", "transformers", "regulators",
                    "capacitors", "loads", "generators"},
             "document");
  check_version(root);
  FeederDocument d;

  YAML::Node meta = required(root, "meta", "");
  check_keys(meta, {"name", "s_base_kva", "v_base_kv", "vmin", "vmax"}, "meta");
  d.name = opt<std::string>(meta, "name", "meta").value_or("");
  d.s_base_kva = get<double>(meta, "s_base_kva", "meta");
  if (!(d.s_base_kva > 0.0)) fail(meta["s_base_kva"], "meta.s_base_kva", "must be positive");
  YAML::Node vb = required(meta, "v_base_kv", "meta");
  if (!vb.IsMap()) fail(vb, "meta.v_base_kv", "expected a mapping region -> kV");
  for (auto it = vb.begin(); it != vb.end(); ++it) {
    const std::string r = it->first.as<std::string>();
    const double kv = as<double>(it->second, "meta.v_base_kv." + r);
    if (!(kv > 0.0)) fail(it->second, "meta.v_base_kv." + r, "must be positive");
    d.v_base_kv[r] = kv;
  }
  d.vmin = opt<double>(meta, "vmin", "meta").value_or(d.vmin);
  d.vmax = opt<double>(meta, "vmax", "meta").value_or(d.vmax);

  YAML::Node src = required(root, "source", "");
  check_keys(src, {"bus", "v_pu", "angle_deg", "grid_price"}, "source");
  d.source.bus = get<std::string>(src, "bus", "source");
  if (src["v_pu"]) {
    if (src["v_pu"].IsScalar()) d.source.v_pu.fill(get<double>(src, "v_pu", "source"));
    else d.source.v_pu = phase_map(src["v_pu"], "source.v_pu");
  }
  if (src["angle_deg"]) d.source.angle_deg = phase_map(src["angle_deg"], "source.angle_deg");
  d.source.grid_price = opt<double>(src, "grid_price", "source").value_or(d.source.grid_price);

  auto seq = [&](const char* key) {
    YAML::Node n = root[key];
    if (n && !n.IsSequence() && !n.IsNull()) fail(n, key, "expected a list");
    return n;
  };
  auto remember = [&](const std::string& key, const YAML::Node& n) {
    if (!d.locations.emplace(key, line_of(n)).second) fail(n, key, "duplicate id");
  };

  if (YAML::Node codes = root["line_codes"]) {
    if (!codes.IsMap()) fail(codes, "line_codes", "expected a mapping code -> data");
    for (auto it = codes.begin(); it != codes.end(); ++it) {
      const std::string id = it->first.as<std::string>();
      const std::string c = "line_codes." + id;
      const YAML::Node n = it->second;
      check_keys(n, {"z_ohm_per_mile", "b_us_per_mile"}, c);
      DocLineCode lc;
      lc.id = id;
      YAML::Node z = required(n, "z_ohm_per_mile", c);
      const int dim = z.IsSequence() ? static_cast<int>(z.size()) : 0;
      if (dim < 1 || dim > 3) fail(z, c + ".z_ohm_per_mile", "expected 1 to 3 rows");
      lc.z_ohm_per_mile = complex_table(z, c + ".z_ohm_per_mile", dim);
      if (n["b_us_per_mile"]) lc.b_us_per_mile = real_table(n["b_us_per_mile"], c + ".b_us_per_mile", dim);
      remember("line_code " + id, it->first);
      d.line_codes.push_back(std::move(lc));
    }
  }

  if (YAML::Node n = seq("buses"))
    for (const auto& b : n) {
      check_keys(b, {"id", "phases", "region", "vmin", "vmax", "bounded"}, "buses[]");
      DocBus x;
      x.id = get<std::string>(b, "id", "buses[]");
      const std::string c = "bus " + x.id;
      x.phases = phases_field(b, c);
      x.region = get<std::string>(b, "region", c);
      x.vmin = opt<double>(b, "vmin", c);
      x.vmax = opt<double>(b, "vmax", c);
      x.bounded = opt<bool>(b, "bounded", c).value_or(true);
      remember(c, b);
      d.buses.push_back(std::move(x));
    }

  if (YAML::Node n = seq("lines"))
    for (const auto& l : n) {
      check_keys(l, {"id", "from", "to", "phases", "code", "length_ft", "z_ohm", "z_ohm_per_mile"}, "lines[]");
      DocLine x;
      x.id = get<std::string>(l, "id", "lines[]");
      const std::string c = "line " + x.id;
      x.from = get<std::string>(l, "from", c);
      x.to = get<std::string>(l, "to", c);
      x.phases = phases_field(l, c);
      const int dim = PhaseSet::parse(x.phases).size();
      x.code = opt<std::string>(l, "code", c).value_or("");
      x.length_ft = opt<double>(l, "length_ft", c);
      const int forms = !x.code.empty() + !!l["z_ohm"] + !!l["z_ohm_per_mile"];
      if (forms != 1) fail(l, c, "give exactly one of code, z_ohm, z_ohm_per_mile");
      if (l["z_ohm"]) {
        x.z_ohm = complex_table(l["z_ohm"], c + ".z_ohm", dim);
        if (x.length_ft) fail(l["length_ft"], c + ".length_ft", "length is not used with z_ohm");
      } else {
        if (!x.length_ft) fail(l, c + ".length_ft", "missing required field");
        if (*x.length_ft < 0.0) fail(l["length_ft"], c + ".length_ft", "must be non-negative");
        if (l["z_ohm_per_mile"]) {
          // Inline per-mile data becomes an anonymous code named after the line.
          DocLineCode lc;
          lc.id = "@" + x.id;
          lc.z_ohm_per_mile = complex_table(l["z_ohm_per_mile"], c + ".z_ohm_per_mile", dim);
          d.line_codes.push_back(std::move(lc));
          x.code = "@" + x.id;
        }
      }
      remember(c, l);
      d.lines.push_back(std::move(x));
    }

  if (YAML::Node n = seq("transformers"))
    for (const auto& t : n) {
      check_keys(t, {"id", "from", "to", "phases", "kva", "r_pct", "x_pct"}, "transformers[]");
      DocTransformer x;
      x.id = get<std::string>(t, "id", "transformers[]");
      const std::string c = "transformer " + x.id;
      x.from = get<std::string>(t, "from", c);
      x.to = get<std::string>(t, "to", c);
      x.phases = phases_field(t, c);
      x.kva = get<double>(t, "kva", c);
      if (!(x.kva > 0.0)) fail(t["kva"], c + ".kva", "must be positive");
      x.r_pct = get<double>(t, "r_pct", c);
      x.x_pct = get<double>(t, "x_pct", c);
      remember(c, t);
      d.transformers.push_back(std::move(x));
    }

  if (YAML::Node n = seq("regulators"))
    for (const auto& r : n) {
      check_keys(r, {"id", "from", "to", "phases", "taps", "z_ohm"}, "regulators[]");
      DocRegulator x;
      x.id = get<std::string>(r, "id", "regulators[]");
      const std::string c = "regulator " + x.id;
      x.from = get<std::string>(r, "from", c);
      x.to = get<std::string>(r, "to", c);
      x.phases = phases_field(r, c);
      YAML::Node taps = required(r, "taps", c);
      if (!taps.IsMap()) fail(taps, c + ".taps", "expected a mapping keyed by phase (a, b, c)");
      for (auto it = taps.begin(); it != taps.end(); ++it) {
        const std::string k = it->first.as<std::string>();
        if (k.size() != 1 || k[0] < 'a' || k[0] > 'c') fail(it->first, c + ".taps", "unknown phase key '" + k + "'");
        const int tap = as<int>(it->second, c + ".taps." + k);
        if (tap < kMinTap || tap > kMaxTap)
          fail(it->second, c + ".taps." + k,
               "regulator '" + x.id + "': tap " + std::to_string(tap) + " outside [-16, 16]");
        x.taps[k[0] - 'a'] = tap;
      }
      if (r["z_ohm"]) x.z_ohm = complex_table(r["z_ohm"], c + ".z_ohm", PhaseSet::parse(x.phases).size());
      remember(c, r);
      d.regulators.push_back(std::move(x));
    }

  if (YAML::Node n = seq("capacitors"))
    for (const auto& k : n) {
      check_keys(k, {"id", "bus", "phases", "kvar"}, "capacitors[]");
      DocCapacitor x;
      x.id = get<std::string>(k, "id", "capacitors[]");
      const std::string c = "capacitor " + x.id;
      x.bus = get<std::string>(k, "bus", c);
      x.phases = phases_field(k, c);
      x.kvar = phase_map(required(k, "kvar", c), c + ".kvar");
      remember(c, k);
      d.capacitors.push_back(std::move(x));
    }

  if (YAML::Node n = seq("loads"))
    for (const auto& ld : n) {
      check_keys(ld, {"id", "bus", "phases", "connection", "model", "zip", "kw", "kvar", "v_floor"}, "loads[]");
      DocLoad x;
      x.id = get<std::string>(ld, "id", "loads[]");
      const std::string c = "load " + x.id;
      x.bus = get<std::string>(ld, "bus", c);
      x.phases = phases_field(ld, c);
      x.connection = opt<std::string>(ld, "connection", c).value_or("wye");
      if (x.connection != "wye" && x.connection != "delta")
        fail(ld["connection"], c + ".connection", "expected wye or delta");
      if (ld["model"] && ld["zip"]) fail(ld, c, "give either model or zip");
      if (ld["model"]) {
        const std::string m = get<std::string>(ld, "model", c);
        if (m == "PQ") x.zip = {0.0, 0.0, 1.0};
        else if (m == "I") x.zip = {0.0, 1.0, 0.0};
        else if (m == "Z") x.zip = {1.0, 0.0, 0.0};
        else fail(ld["model"], c + ".model", "expected PQ, I or Z");
      }
      if (ld["zip"]) {
        YAML::Node z = ld["zip"];
        if (!z.IsSequence() || z.size() != 3) fail(z, c + ".zip", "expected [w_z, w_i, w_p]");
        for (int i = 0; i < 3; ++i) x.zip[i] = as<double>(z[i], c + ".zip");
      }
      auto table = [&](const char* key) {
        YAML::Node t = ld[key];
        if (!t) return std::array<double, 3>{};
        return x.connection == "delta" ? delta_map(t, c + "." + key) : phase_map(t, c + "." + key);
      };
      x.kw = table("kw");
      x.kvar = table("kvar");
      x.v_floor = opt<double>(ld, "v_floor", c);
      remember(c, ld);
      d.loads.push_back(std::move(x));
    }

  if (YAML::Node n = seq("generators"))
    for (const auto& g : n) {
      DocGenerator x = parse_generator(g, "generators[]");
      remember("generator " + x.id, g);
      d.generators.push_back(std::move(x));
    }
  return d;
}

namespace io_detail {

inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    char t[64];
    std::snprintf(t, sizeof t, "%.*g", prec, v);
    if (std::strtod(t, nullptr) == v) return t;
  }
  return buf;
}

inline std::string phase_map_text(const std::array<double, 3>& v, PhaseSet ph, bool delta = false) {
  static const char* dkeys[3] = {"ab", "bc", "ca"};
  std::string s = "{";
  bool first = true;
  for (int p = 0; p < 3; ++p) {
    if (delta ? v[p] == 0.0 : !ph.contains(p)) continue;
    if (!first) s += ", ";
    first = false;
    s += delta ? std::string(dkeys[p]) : std::string(1, phase_letter(p));
    s += ": " + fmt_num(v[p]);
  }
  return s + "}";
}

inline std::string table_text(const ComplexTable& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.size(); ++i) {
    s += i ? ", [" : "[";
    for (std::size_t j = 0; j < t[i].size(); ++j)
      s += (j ? ", [" : "[") + fmt_num(t[i][j][0]) + ", " + fmt_num(t[i][j][1]) + "]";
    s += "]";
  }
  return s + "]";
}

inline std::string table_text(const RealTable& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.size(); ++i) {
    s += i ? ", [" : "[";
    for (std::size_t j = 0; j < t[i].size(); ++j) s += (j ? ", " : "") + fmt_num(t[i][j]);
    s += "]";
  }
  return s + "]";
}

inline std::string quote(const std::string& s) { return "\"" + s + "\""; }

}  // namespace io_detail

/// Canonical text of a document; parse_feeder_document(emit(d)) == d.
inline std::string emit_feeder_document(const FeederDocument& d) {
  using namespace io_detail;
  std::ostringstream os;
  os << "schema_version: " << d.schema_version << "\n";
  os << "meta:\n  name: " << quote(d.name) << "\n  s_base_kva: " << fmt_num(d.s_base_kva) << "\n  v_base_kv: {";
  bool first = true;
  for (const auto& [r, kv] : d.v_base_kv) {
    os << (first ? "" : ", ") << quote(r) << ": " << fmt_num(kv);
    first = false;
  }
  os << "}\n  vmin: " << fmt_num(d.vmin) << "\n  vmax: " << fmt_num(d.vmax) << "\n";
  os << "source:\n  bus: " << quote(d.source.bus) << "\n  v_pu: " << phase_map_text(d.source.v_pu, PhaseSet::abc())
     << "\n  angle_deg: " << phase_map_text(d.source.angle_deg, PhaseSet::abc())
     << "\n  grid_price: " << fmt_num(d.source.grid_price) << "\n";
  std::vector<const DocLineCode*> named;
  for (const auto& lc : d.line_codes)
    if (lc.id.empty() || lc.id[0] != '@') named.push_back(&lc);
  if (!named.empty()) {
    os << "line_codes:\n";
    for (const auto* lc : named) {
      os << "  " << quote(lc->id) << ":\n    z_ohm_per_mile: " << table_text(lc->z_ohm_per_mile) << "\n";
      if (!lc->b_us_per_mile.empty()) os << "    b_us_per_mile: " << table_text(lc->b_us_per_mile) << "\n";
    }
  }
  os << "buses:\n";
  for (const auto& b : d.buses) {
    os << "  - {id: " << quote(b.id) << ", phases: " << b.phases << ", region: " << quote(b.region);
    if (b.vmin) os << ", vmin: " << fmt_num(*b.vmin);
    if (b.vmax) os << ", vmax: " << fmt_num(*b.vmax);
    if (!b.bounded) os << ", bounded: false";
    os << "}\n";
  }
  if (!d.lines.empty()) os << "lines:\n";
  for (const auto& l : d.lines) {
    os << "  - {id: " << quote(l.id) << ", from: " << quote(l.from) << ", to: " << quote(l.to) << ", phases: " << l.phases;
    if (!l.code.empty() && l.code[0] == '@') {
      auto it = std::find_if(d.line_codes.begin(), d.line_codes.end(), [&](const DocLineCode& c) { return c.id == l.code; });
      if (it != d.line_codes.end()) os << ", z_ohm_per_mile: " << table_text(it->z_ohm_per_mile);
    } else if (!l.code.empty()) {
      os << ", code: " << quote(l.code);
    } else {
      os << ", z_ohm: " << table_text(l.z_ohm);
    }
    if (l.length_ft) os << ", length_ft: " << fmt_num(*l.length_ft);
    os << "}\n";
  }
  if (!d.transformers.empty()) os << "transformers:\n";
  for (const auto& t : d.transformers)
    os << "  - {id: " << quote(t.id) << ", from: " << quote(t.from) << ", to: " << quote(t.to) << ", phases: " << t.phases
       << ", kva: " << fmt_num(t.kva) << ", r_pct: " << fmt_num(t.r_pct) << ", x_pct: " << fmt_num(t.x_pct) << "}\n";
  if (!d.regulators.empty()) os << "regulators:\n";
  for (const auto& r : d.regulators) {
    os << "  - {id: " << quote(r.id) << ", from: " << quote(r.from) << ", to: " << quote(r.to) << ", phases: " << r.phases
       << ", taps: {";
    const PhaseSet ph = PhaseSet::parse(r.phases);
    bool f = true;
    for (int p : ph.phases()) {
      os << (f ? "" : ", ") << phase_letter(p) << ": " << r.taps[p];
      f = false;
    }
    os << "}";
    if (!r.z_ohm.empty()) os << ", z_ohm: " << table_text(r.z_ohm);
    os << "}\n";
  }
  if (!d.capacitors.empty()) os << "capacitors:\n";
  for (const auto& c : d.capacitors)
    os << "  - {id: " << quote(c.id) << ", bus: " << quote(c.bus) << ", phases: " << c.phases
       << ", kvar: " << phase_map_text(c.kvar, PhaseSet::parse(c.phases)) << "}\n";
  if (!d.loads.empty()) os << "loads:\n";
  for (const auto& l : d.loads) {
    const bool delta = l.connection == "delta";
    const PhaseSet ph = PhaseSet::parse(l.phases);
    os << "  - {id: " << quote(l.id) << ", bus: " << quote(l.bus) << ", phases: " << l.phases
       << ", connection: " << l.connection << ", zip: [" << fmt_num(l.zip[0]) << ", " << fmt_num(l.zip[1]) << ", "
       << fmt_num(l.zip[2]) << "], kw: " << phase_map_text(l.kw, ph, delta)
       << ", kvar: " << phase_map_text(l.kvar, ph, delta);
    if (l.v_floor) os << ", v_floor: " << fmt_num(*l.v_floor);
    os << "}\n";
  }
  if (!d.generators.empty()) os << "generators:\n";
  for (const auto& g : d.generators) {
    const PhaseSet ph = PhaseSet::parse(g.phases);
    os << "  - {id: " << quote(g.id) << ", bus: " << quote(g.bus) << ", phases: " << g.phases
       << ", p_max_kw: " << phase_map_text(g.p_max_kw, ph) << ", p_min_kw: " << phase_map_text(g.p_min_kw, ph)
       << ", power_factor: " << fmt_num(g.power_factor) << ", a1: " << fmt_num(g.a1) << ", a2: " << fmt_num(g.a2);
    if (g.beta) os << ", beta: " << fmt_num(*g.beta);
    os << "}\n";
  }
  return os.str();
}

/// Physical-unit model of a document (ohms, siemens, kW per phase).
inline FeederModel build_physical_model(const FeederDocument& d) {
  using namespace io_detail;
  FeederModel m;
  m.name = d.name;
  m.units = Units::physical;
  m.s_base_kva = d.s_base_kva;
  m.region_kv = d.v_base_kv;
  auto where = [&](const std::string& key) { return d.location(key); };
  auto bus_kv = [&](const std::string& bus_id, int line, const std::string& field) {
    for (const auto& b : d.buses)
      if (b.id == bus_id) {
        auto it = d.v_base_kv.find(b.region);
        if (it == d.v_base_kv.end()) throw ParseError(where("bus " + b.id), "bus " + b.id + ".region", "no base voltage for region '" + b.region + "'");
        return it->second;
      }
    throw ParseError(line, field, "unknown bus '" + bus_id + "'");
  };

  for (const auto& b : d.buses) {
    Bus x;
    x.id = b.id;
    x.phases = PhaseSet::parse(b.phases);
    x.region = b.region;
    x.vmin = b.vmin.value_or(d.vmin);
    x.vmax = b.vmax.value_or(d.vmax);
    x.bounded = b.bounded;
    x.shunt_y = CMatrix::Zero(x.phases.size(), x.phases.size());
    m.buses.push_back(std::move(x));
  }
  auto bus_ref = [&](const std::string& id, int line, const std::string& field) -> Bus& {
    for (auto& b : m.buses)
      if (b.id == id) return b;
    throw ParseError(line, field, "unknown bus '" + id + "'");
  };
  auto add_shunt = [&](Bus& bus, PhaseSet ph, const CMatrix& y, int line, const std::string& field) {
    if (!ph.is_subset_of(bus.phases))
      throw ParseError(line, field, "phases " + ph.str() + " are not a subset of bus " + bus.id + " phases " + bus.phases.str());
    const auto pos = bus.phases.positions_of(ph);
    for (std::size_t i = 0; i < pos.size(); ++i)
      for (std::size_t j = 0; j < pos.size(); ++j) bus.shunt_y(pos[i], pos[j]) += y(i, j);
  };

  for (const auto& l : d.lines) {
    const std::string key = "line " + l.id;
    const int line = where(key);
    LineSegment x;
    x.id = l.id;
    x.from = l.from;
    x.to = l.to;
    x.phases = PhaseSet::parse(l.phases);
    const int n = x.phases.size();
    if (l.code.empty()) {
      x.z = to_matrix(l.z_ohm);
    } else {
      auto it = std::find_if(d.line_codes.begin(), d.line_codes.end(), [&](const DocLineCode& c) { return c.id == l.code; });
      if (it == d.line_codes.end()) throw ParseError(line, key + ".code", "unknown line code '" + l.code + "'");
      if (static_cast<int>(it->z_ohm_per_mile.size()) != n)
        throw ParseError(line, key + ".code", "line code '" + l.code + "' has " + std::to_string(it->z_ohm_per_mile.size()) +
                                                  " phases, line has " + std::to_string(n));
      const double miles = l.length_ft.value_or(0.0) / 5280.0;
      x.z = to_matrix(it->z_ohm_per_mile) * miles;
      if (!it->b_us_per_mile.empty()) {
        // Half of the line charging at each end.
        CMatrix y = cplx(0.0, 1.0) * to_matrix(it->b_us_per_mile).cast<cplx>() * (1e-6 * miles * 0.5);
        add_shunt(bus_ref(l.from, line, key + ".from"), x.phases, y, line, key);
        add_shunt(bus_ref(l.to, line, key + ".to"), x.phases, y, line, key);
      }
    }
    m.lines.push_back(std::move(x));
  }
  for (const auto& t : d.transformers) {
    const std::string key = "transformer " + t.id;
    const int line = where(key);
    LineSegment x;
    x.id = t.id;
    x.from = t.from;
    x.to = t.to;
    x.phases = PhaseSet::parse(t.phases);
    // Series impedance on the system base, expressed in ohms of the primary region.
    const double kv = bus_kv(t.from, line, key + ".from");
    const double zb = kv * kv * 1000.0 / d.s_base_kva;
    const cplx zpu = cplx(t.r_pct, t.x_pct) / 100.0 * (d.s_base_kva / t.kva);
    x.z = CMatrix::Identity(x.phases.size(), x.phases.size()) * (zpu * zb);
    m.lines.push_back(std::move(x));
  }
  for (const auto& r : d.regulators) {
    RegulatorBank x;
    x.id = r.id;
    x.from = r.from;
    x.to = r.to;
    x.phases = PhaseSet::parse(r.phases);
    x.taps = r.taps;
    x.z_reg = r.z_ohm.empty() ? CMatrix::Zero(x.phases.size(), x.phases.size()) : to_matrix(r.z_ohm);
    m.regulators.push_back(std::move(x));
  }
  for (const auto& c : d.capacitors) {
    const std::string key = "capacitor " + c.id;
    const int line = where(key);
    Bus& bus = bus_ref(c.bus, line, key + ".bus");
    const PhaseSet ph = PhaseSet::parse(c.phases);
    const double kv = bus_kv(c.bus, line, key + ".bus") / std::sqrt(3.0);  // rated phase voltage
    CMatrix y = CMatrix::Zero(ph.size(), ph.size());
    const auto pv = ph.phases();
    for (std::size_t i = 0; i < pv.size(); ++i) y(i, i) = cplx(0.0, c.kvar[pv[i]] / (kv * kv * 1000.0));
    add_shunt(bus, ph, y, line, key);
  }
  for (const auto& l : d.loads) {
    ZipLoad x;
    x.id = l.id;
    x.bus = l.bus;
    x.phases = PhaseSet::parse(l.phases);
    x.connection = l.connection == "delta" ? Connection::delta : Connection::wye;
    x.zip = ZipWeights{l.zip[0], l.zip[1], l.zip[2]};
    for (int p = 0; p < 3; ++p) x.s_nominal[p] = cplx(l.kw[p], l.kvar[p]);
    if (l.v_floor) x.v_floor = *l.v_floor;
    m.loads.push_back(std::move(x));
  }
  for (const auto& g : d.generators) {
    DistributedGenerator x;
    x.id = g.id;
    x.bus = g.bus;
    x.phases = PhaseSet::parse(g.phases);
    x.p_max = g.p_max_kw;
    x.p_min = g.p_min_kw;
    x.power_factor = g.power_factor;
    x.cost = GeneratorCost{g.a1, g.a2};
    x.balance_beta = g.beta;
    m.generators.push_back(std::move(x));
  }
  m.source.bus = d.source.bus;
  for (int p = 0; p < 3; ++p)
    m.source.v_ref[p] = std::polar(d.source.v_pu[p], d.source.angle_deg[p] * std::numbers::pi / 180.0);
  m.source.grid_price = d.source.grid_price;
  return m;
}

/// Validated per-unit model of a document.  Validation failures name the
/// item and the line it was defined on.
inline FeederModel build_model(const FeederDocument& d) {
  FeederModel phys = build_physical_model(d);
  ValidationReport rep = validate_feeder(phys);
  if (!rep.ok()) {
    const auto& first = rep.issues.front();
    std::string msg = first.message;
    if (rep.issues.size() > 1) msg += " (and " + std::to_string(rep.issues.size() - 1) + " more)";
    throw ParseError(d.location(first.location), first.location, msg);
  }
  return to_per_unit(phys);
}

inline FeederModel parse_feeder(const std::string& text) { return build_model(parse_feeder_document(text)); }

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline FeederDocument load_feeder_document(const std::string& path) {
  try {
    return parse_feeder_document(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.field(), std::string(path) + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Scenarios and run configuration

struct Scenario {
  std::string name;
  std::optional<double> source_pu;
  std::map<std::string, std::array<int, 3>> taps;  // regulator id -> taps (phases of the bank)
  std::map<std::string, std::map<int, bool>> tap_phases;  // which phases were given
  std::vector<std::string> exempt;                 // buses without voltage limits
  std::optional<double> vmin, vmax;                // applied to every bus
  std::vector<DocGenerator> generators;            // appended to the feeder's
  std::optional<std::string> objective;
  std::optional<std::string> formulation;
  std::optional<double> grid_price;
  std::string head_segment;                        // feeder-head segment for flow reports
};

/// Empty strings mean "not set": objective and formulation then come from the
/// scenario, falling back to loss-min and symmetrical.
struct RunConfig {
  std::string feeder;
  std::string scenario;
  std::string objective;
  std::string formulation;
  std::string format = "table";
  std::string out;
  conic::SolverSettings solver;
  LoopOptions loop;
  VoltRegOptions voltreg;
};

namespace io_detail {

inline Scenario parse_scenario_node(const YAML::Node& n) {
  check_keys(n, {"name", "source_pu", "taps", "exempt", "vmin", "vmax", "generators", "objective", "formulation",
                 "grid_price", "head_segment"},
             "scenario");
  Scenario s;
  s.name = opt<std::string>(n, "name", "scenario").value_or("");
  s.source_pu = opt<double>(n, "source_pu", "scenario");
  if (YAML::Node t = n["taps"]) {
    if (!t.IsMap()) fail(t, "scenario.taps", "expected a mapping regulator -> taps");
    for (auto it = t.begin(); it != t.end(); ++it) {
      const std::string id = it->first.as<std::string>();
      const std::string f = "scenario.taps." + id;
      const YAML::Node v = it->second;
      if (!v.IsMap()) fail(v, f, "expected a mapping keyed by phase (a, b, c)");
      std::array<int, 3> taps{};
      for (auto jt = v.begin(); jt != v.end(); ++jt) {
        const std::string k = jt->first.as<std::string>();
        if (k.size() != 1 || k[0] < 'a' || k[0] > 'c') fail(jt->first, f, "unknown phase key '" + k + "'");
        const int tap = as<int>(jt->second, f + "." + k);
        if (tap < kMinTap || tap > kMaxTap)
          fail(jt->second, f + "." + k, "regulator '" + id + "': tap " + std::to_string(tap) + " outside [-16, 16]");
        taps[k[0] - 'a'] = tap;
        s.tap_phases[id][k[0] - 'a'] = true;
      }
      s.taps[id] = taps;
    }
  }
  if (YAML::Node e = n["exempt"]) {
    if (!e.IsSequence()) fail(e, "scenario.exempt", "expected a list of bus ids");
    for (const auto& b : e) s.exempt.push_back(as<std::string>(b, "scenario.exempt"));
  }
  s.vmin = opt<double>(n, "vmin", "scenario");
  s.vmax = opt<double>(n, "vmax", "scenario");
  if (YAML::Node g = n["generators"]) {
    if (!g.IsSequence()) fail(g, "scenario.generators", "expected a list");
    for (const auto& x : g) s.generators.push_back(parse_generator(x, "scenario.generators[]"));
  }
  s.objective = opt<std::string>(n, "objective", "scenario");
  s.formulation = opt<std::string>(n, "formulation", "scenario");
  s.grid_price = opt<double>(n, "grid_price", "scenario");
  s.head_segment = opt<std::string>(n, "head_segment", "scenario").value_or("");
  if (s.objective) try {
      parse_objective(*s.objective);
    } catch (const ModelError& ex) {
      fail(n["objective"], "scenario.objective", ex.what());
    }
  if (s.formulation) try {
      parse_formulation(*s.formulation);
    } catch (const ModelError& ex) {
      fail(n["formulation"], "scenario.formulation", ex.what());
    }
  return s;
}

}  // namespace io_detail

/// Scenario file: schema_version plus a `scenario` mapping.
inline Scenario parse_scenario(const std::string& text) {
  using namespace io_detail;
  YAML::Node root = load_yaml(text);
  if (!root.IsMap()) throw ParseError(1, "", "scenario document must be a mapping");
  check_keys(root, {"schema_version", "scenario"}, "document");
  check_version(root);
  return parse_scenario_node(required(root, "scenario", ""));
}

/// Applies scenario overrides to a feeder document.
inline FeederDocument apply_scenario(FeederDocument d, const Scenario& s) {
  if (s.source_pu) d.source.v_pu.fill(*s.source_pu);
  for (const auto& [id, taps] : s.taps) {
    auto it = std::find_if(d.regulators.begin(), d.regulators.end(), [&](const DocRegulator& r) { return r.id == id; });
    if (it == d.regulators.end()) throw ModelError("scenario sets taps of unknown regulator '" + id + "'");
    for (const auto& [p, given] : s.tap_phases.at(id))
      if (given) it->taps[p] = taps[p];
  }
  for (const auto& b : s.exempt) {
    auto it = std::find_if(d.buses.begin(), d.buses.end(), [&](const DocBus& x) { return x.id == b; });
    if (it == d.buses.end()) throw ModelError("scenario exempts unknown bus '" + b + "'");
    it->bounded = false;
  }
  if (s.vmin || s.vmax)
    for (auto& b : d.buses) {
      if (s.vmin) b.vmin = *s.vmin;
      if (s.vmax) b.vmax = *s.vmax;
    }
  for (const auto& g : s.generators) d.generators.push_back(g);
  if (s.grid_price) d.source.grid_price = *s.grid_price;
  return d;
}

/// Run configuration in the same YAML dialect as feeders:
///   schema_version: 1
///   run: {feeder, scenario, objective, formulation, format, out}
///   solver: {tol, max_iter}
///   loop: {tol, max_iter, relaxation}
///   voltreg: {tol, v_slack, max_iter}
inline RunConfig parse_run_config(const std::string& text, RunConfig cfg = {}) {
  using namespace io_detail;
  YAML::Node root = load_yaml(text);
  if (!root.IsMap()) throw ParseError(1, "", "config document must be a mapping");
  check_keys(root, {"schema_version", "run", "solver", "loop", "voltreg"}, "document");
  check_version(root);
  if (YAML::Node r = root["run"]) {
    check_keys(r, {"feeder", "scenario", "objective", "formulation", "format", "out"}, "run");
    cfg.feeder = opt<std::string>(r, "feeder", "run").value_or(cfg.feeder);
    cfg.scenario = opt<std::string>(r, "scenario", "run").value_or(cfg.scenario);
    cfg.objective = opt<std::string>(r, "objective", "run").value_or(cfg.objective);
    cfg.formulation = opt<std::string>(r, "formulation", "run").value_or(cfg.formulation);
    cfg.format = opt<std::string>(r, "format", "run").value_or(cfg.format);
    cfg.out = opt<std::string>(r, "out", "run").value_or(cfg.out);
  }
  if (YAML::Node s = root["solver"]) {
    check_keys(s, {"tol", "max_iter"}, "solver");
    cfg.solver.tol = opt<double>(s, "tol", "solver").value_or(cfg.solver.tol);
    cfg.solver.max_iter = opt<int>(s, "max_iter", "solver").value_or(cfg.solver.max_iter);
  }
  if (YAML::Node l = root["loop"]) {
    check_keys(l, {"tol", "max_iter", "relaxation"}, "loop");
    cfg.loop.tol = opt<double>(l, "tol", "loop").value_or(cfg.loop.tol);
    cfg.loop.relaxation = opt<double>(l, "relaxation", "loop").value_or(cfg.loop.relaxation);
    if (!(cfg.loop.relaxation > 0.0 && cfg.loop.relaxation <= 1.0))
      fail(l["relaxation"], "loop.relaxation", "must lie in (0, 1]");
    cfg.loop.max_iter = opt<int>(l, "max_iter", "loop").value_or(cfg.loop.max_iter);
  }
  if (YAML::Node v = root["voltreg"]) {
    check_keys(v, {"tol", "v_slack", "max_iter"}, "voltreg");
    cfg.voltreg.tol_kw = opt<double>(v, "tol", "voltreg").value_or(cfg.voltreg.tol_kw);
    cfg.voltreg.v_slack = opt<double>(v, "v_slack", "voltreg").value_or(cfg.voltreg.v_slack);
    cfg.voltreg.max_iter = opt<int>(v, "max_iter", "voltreg").value_or(cfg.voltreg.max_iter);
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { table, csv, json };

inline ReportFormat parse_report_format(const std::string& s) {
  if (s == "table") return ReportFormat::table;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw ModelError("unknown format '" + s + "'");
}

struct VoltageProfile {
  std::string label;
  std::vector<PhaseArray> voltages;  // per bus
};

struct HeadFlow {
  std::string label;
  std::string segment;
  PhaseArray kw_kvar{};  // P + jQ per phase, kW / kvar
  PhaseSet phases;
};

struct LabeledError {
  std::string label;
  FlowErrorReport error;
};

struct TraceRow {
  std::string label;
  int iteration = 0;
  std::vector<std::pair<std::string, double>> values;
};

struct DispatchRow {
  std::string generator;
  PhaseSet phases;
  PhaseArray kw_kvar{};
};

struct Report {
  std::string feeder;
  std::string command;
  std::vector<std::pair<std::string, std::string>> summary;  // key, value
  std::vector<std::string> bus_ids;
  std::vector<PhaseSet> bus_phases;
  std::vector<VoltageProfile> profiles;
  std::vector<HeadFlow> head_flows;
  std::vector<LabeledError> errors;
  std::vector<DispatchRow> dispatch;
  std::vector<TraceRow> trace;
};

inline Report make_report(const FeederModel& model, std::string command) {
  Report r;
  r.feeder = model.name;
  r.command = std::move(command);
  for (const auto& b : model.buses) {
    r.bus_ids.push_back(b.id);
    r.bus_phases.push_back(b.phases);
  }
  return r;
}

namespace io_detail {

inline std::string f4(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s = buf;
  if (s == "-0.0000") s = "0.0000";
  return s;
}

inline std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }
inline std::string padr(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

inline double rounded(double v) {
  double r = std::round(v * 1e4) / 1e4;
  return r == 0.0 ? 0.0 : r;
}

}  // namespace io_detail

/// Deterministic text.  table: voltage profiles (|V| p.u., angle deg),
/// feeder-head flows, flow-error tables (P/Q x three phases), dispatch and
/// iteration traces.  csv: node, phase, vm_pu, va_deg of the first profile.
/// json: everything, numbers rounded to 4 decimals.
inline std::string write_report(const Report& r, ReportFormat fmt) {
  using namespace io_detail;
  std::ostringstream os;
  if (fmt == ReportFormat::csv) {
    os << "node,phase,vm_pu,va_deg\n";
    if (!r.profiles.empty()) {
      const auto& v = r.profiles.front().voltages;
      for (std::size_t b = 0; b < r.bus_ids.size(); ++b)
        for (int p : r.bus_phases[b].phases())
          os << r.bus_ids[b] << "," << phase_letter(p) << "," << f4(std::abs(v[b][p])) << ","
             << f4(std::arg(v[b][p]) * 180.0 / std::numbers::pi) << "\n";
    }
    return os.str();
  }
  if (fmt == ReportFormat::json) {
    nlohmann::ordered_json j;
    j["feeder"] = r.feeder;
    j["command"] = r.command;
    nlohmann::ordered_json sum = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.summary) sum[k] = v;
    j["summary"] = sum;
    nlohmann::ordered_json profiles = nlohmann::ordered_json::array();
    for (const auto& pr : r.profiles) {
      nlohmann::ordered_json rows = nlohmann::ordered_json::array();
      for (std::size_t b = 0; b < r.bus_ids.size(); ++b)
        for (int p : r.bus_phases[b].phases())
          rows.push_back({{"node", r.bus_ids[b]},
                          {"phase", std::string(1, phase_letter(p))},
                          {"vm_pu", rounded(std::abs(pr.voltages[b][p]))},
                          {"va_deg", rounded(std::arg(pr.voltages[b][p]) * 180.0 / std::numbers::pi)}});
      profiles.push_back({{"label", pr.label}, {"voltages", rows}});
    }
    j["profiles"] = profiles;
    nlohmann::ordered_json flows = nlohmann::ordered_json::array();
    for (const auto& h : r.head_flows) {
      nlohmann::ordered_json ph = nlohmann::ordered_json::object();
      for (int p : h.phases.phases())
        ph[std::string(1, phase_letter(p))] = {{"p_kw", rounded(h.kw_kvar[p].real())}, {"q_kvar", rounded(h.kw_kvar[p].imag())}};
      flows.push_back({{"label", h.label}, {"segment", h.segment}, {"phases", ph}});
    }
    j["head_flows"] = flows;
    nlohmann::ordered_json errs = nlohmann::ordered_json::array();
    for (const auto& e : r.errors) {
      nlohmann::ordered_json ph = nlohmann::ordered_json::object();
      for (int p : e.error.phases.phases())
        ph[std::string(1, phase_letter(p))] = {{"p_err_pct", rounded(e.error.p_error[p])},
                                               {"q_err_pct", rounded(e.error.q_error[p])},
                                               {"p_absolute", e.error.p_absolute[p]},
                                               {"q_absolute", e.error.q_absolute[p]}};
      errs.push_back({{"label", e.label}, {"segment", e.error.segment}, {"phases", ph}});
    }
    j["flow_errors"] = errs;
    nlohmann::ordered_json disp = nlohmann::ordered_json::array();
    for (const auto& d : r.dispatch) {
      nlohmann::ordered_json ph = nlohmann::ordered_json::object();
      for (int p : d.phases.phases())
        ph[std::string(1, phase_letter(p))] = {{"p_kw", rounded(d.kw_kvar[p].real())}, {"q_kvar", rounded(d.kw_kvar[p].imag())}};
      disp.push_back({{"generator", d.generator}, {"phases", ph}});
    }
    j["dispatch"] = disp;
    nlohmann::ordered_json tr = nlohmann::ordered_json::array();
    for (const auto& t : r.trace) {
      nlohmann::ordered_json row = {{"label", t.label}, {"iteration", t.iteration}};
      for (const auto& [k, v] : t.values) row[k] = v;
      tr.push_back(row);
    }
    j["trace"] = tr;
    return j.dump(2) + "\n";
  }

  os << "feeder: " << r.feeder << "\ncommand: " << r.command << "\n";
  for (const auto& [k, v] : r.summary) os << k << ": " << v << "\n";
  for (const auto& pr : r.profiles) {
    os << "\nvoltage profile: " << pr.label << "\n";
    os << padr("node", 8);
    for (char c : {'A', 'B', 'C'}) os << pad(std::string("V") + c + "(pu)", 10) << pad(std::string("th") + c + "(deg)", 11);
    os << "\n";
    for (std::size_t b = 0; b < r.bus_ids.size(); ++b) {
      os << padr(r.bus_ids[b], 8);
      for (int p = 0; p < 3; ++p) {
        if (!r.bus_phases[b].contains(p)) {
          os << pad("-", 10) << pad("-", 11);
          continue;
        }
        os << pad(f4(std::abs(pr.voltages[b][p])), 10) << pad(f4(std::arg(pr.voltages[b][p]) * 180.0 / std::numbers::pi), 11);
      }
      os << "\n";
    }
  }
  if (!r.head_flows.empty()) {
    os << "\nfeeder-head flows (kW, kvar)\n" << padr("label", 14) << padr("segment", 10);
    for (char c : {'A', 'B', 'C'}) os << pad(std::string("P") + c, 12) << pad(std::string("Q") + c, 12);
    os << "\n";
    for (const auto& h : r.head_flows) {
      os << padr(h.label, 14) << padr(h.segment, 10);
      for (int p = 0; p < 3; ++p) {
        if (!h.phases.contains(p)) {
          os << pad("-", 12) << pad("-", 12);
          continue;
        }
        os << pad(f4(h.kw_kvar[p].real()), 12) << pad(f4(h.kw_kvar[p].imag()), 12);
      }
      os << "\n";
    }
  }
  if (!r.errors.empty()) {
    os << "\nfeeder-head flow errors (%; '*' marks absolute p.u. where the reference is zero)\n"
       << padr("label", 14) << padr("segment", 10);
    for (char c : {'A', 'B', 'C'}) os << pad(std::string("P") + c, 10);
    for (char c : {'A', 'B', 'C'}) os << pad(std::string("Q") + c, 10);
    os << "\n";
    for (const auto& e : r.errors) {
      os << padr(e.label, 14) << padr(e.error.segment, 10);
      for (int p = 0; p < 3; ++p)
        os << pad(e.error.phases.contains(p) ? f4(e.error.p_error[p]) + (e.error.p_absolute[p] ? "*" : "") : "-", 10);
      for (int p = 0; p < 3; ++p)
        os << pad(e.error.phases.contains(p) ? f4(e.error.q_error[p]) + (e.error.q_absolute[p] ? "*" : "") : "-", 10);
      os << "\n";
    }
  }
  if (!r.dispatch.empty()) {
    os << "\ndispatch (kW, kvar)\n" << padr("generator", 12);
    for (char c : {'A', 'B', 'C'}) os << pad(std::string("P") + c, 12) << pad(std::string("Q") + c, 12);
    os << "\n";
    for (const auto& d : r.dispatch) {
      os << padr(d.generator, 12);
      for (int p = 0; p < 3; ++p) {
        if (!d.phases.contains(p)) {
          os << pad("-", 12) << pad("-", 12);
          continue;
        }
        os << pad(f4(d.kw_kvar[p].real()), 12) << pad(f4(d.kw_kvar[p].imag()), 12);
      }
      os << "\n";
    }
  }
  if (!r.trace.empty()) {
    os << "\niterations\n";
    for (const auto& t : r.trace) {
      os << padr(t.label, 10) << pad(std::to_string(t.iteration), 4);
      for (const auto& [k, v] : t.values) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "  %s=%.4e", k.c_str(), v);
        os << buf;
      }
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace seqopf
