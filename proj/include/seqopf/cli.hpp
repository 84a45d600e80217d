// Command-line front end: pf, opf, voltreg and compare subcommands.
#pragma once

#include "seqopf/feeder_io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>

namespace seqopf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInaccurate = 2;
inline constexpr int kExitFailure = 3;

/// Failure carrying the error class reported in the stderr JSON.
class RunError : public Error {
 public:
  RunError(std::string kind, const std::string& msg) : Error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

struct RunOutput {
  int exit_code = kExitOk;
  std::string text;
};

/// Resolves a feeder or scenario argument: an existing path, or a bare name
/// looked up in the data directory (`ieee34` -> data/ieee34.yaml).
inline std::string resolve_input(const std::string& arg, const std::string& subdir) {
  namespace fs = std::filesystem;
  if (arg.empty()) return arg;
  if (fs::exists(arg)) return arg;
#ifdef SEQOPF_DATA_DIR
  fs::path base = fs::path(SEQOPF_DATA_DIR) / subdir;
  for (const fs::path cand : {base / arg, base / (arg + ".yaml")})
    if (fs::exists(cand)) return cand.string();
#endif
  throw RunError("io", "cannot find '" + arg + "'");
}

namespace cli_detail {

inline int exit_for(const conic::SolveStatus& s, bool converged) {
  if (s.tag == conic::SolveTag::Solved && converged) return kExitOk;
  if (s.ok()) return kExitInaccurate;
  return kExitFailure;
}

inline std::string fmt(double v, const char* f = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::string head_segment(const FeederModel& model, const Scenario& sc) {
  if (!sc.head_segment.empty()) {
    if (!model.find_branch(sc.head_segment)) throw RunError("model", "unknown head segment '" + sc.head_segment + "'");
    return sc.head_segment;
  }
  const TopologyOrder topo = radial_order(model);
  const auto& kids = topo.child_branches[model.source_index()];
  if (kids.empty()) return "";
  return model.branch_id(kids.front());
}

inline HeadFlow head_flow(const FeederModel& model, const std::string& label, const std::string& seg,
                          const PhaseArray& flow_pu) {
  HeadFlow h;
  h.label = label;
  h.segment = seg;
  h.phases = model.branch_phases(*model.find_branch(seg));
  for (int p = 0; p < 3; ++p) h.kw_kvar[p] = flow_pu[p] * model.phase_base_kva();
  return h;
}

inline PhaseArray sdp_head_flow(const FeederModel& model, const OpfSolution& s, const std::string& seg) {
  const auto br = model.find_branch(seg);
  for (std::size_t i = 0; i < s.branch_refs.size(); ++i)
    if (s.branch_refs[i] == *br) return s.branch_flow[i];
  return {};
}

inline void add_dispatch(Report& r, const FeederModel& model, const Dispatch& d) {
  for (std::size_t g = 0; g < model.generators.size() && g < d.size(); ++g) {
    DispatchRow row;
    row.generator = model.generators[g].id;
    row.phases = model.generators[g].phases;
    for (int p = 0; p < 3; ++p) row.kw_kvar[p] = d[g][p] * model.phase_base_kva();
    r.dispatch.push_back(row);
  }
}

inline void add_opf_trace(Report& r, const std::string& label, const OpfRun& run) {
  for (const auto& rec : run.trace.records)
    r.trace.push_back({label,
                       rec.iteration,
                       {{"dv", rec.max_voltage_change},
                        {"objective", rec.objective},
                        {"ipm_iter", static_cast<double>(rec.status.iterations)}}});
}

}  // namespace cli_detail

struct Inputs {
  RunConfig cfg;
  Scenario scenario;
  FeederModel model;
  ObjectiveSpec objective;
  Formulation formulation = Formulation::symmetrical;
};

inline Inputs load_inputs(const RunConfig& cfg) {
  Inputs in;
  in.cfg = cfg;
  if (cfg.feeder.empty()) throw RunError("usage", "no feeder given (--feeder or run.feeder in the config)");
  FeederDocument doc = load_feeder_document(resolve_input(cfg.feeder, ""));
  if (!cfg.scenario.empty()) {
    const std::string path = resolve_input(cfg.scenario, "scenarios");
    try {
      in.scenario = parse_scenario(read_text_file(path));
    } catch (const ParseError& e) {
      throw ParseError(e.line(), e.field(), path + ": " + e.what());
    }
    doc = apply_scenario(std::move(doc), in.scenario);
  }
  in.model = build_model(doc);
  const std::string obj = !cfg.objective.empty() ? cfg.objective : in.scenario.objective.value_or("loss-min");
  const std::string form = !cfg.formulation.empty() ? cfg.formulation : in.scenario.formulation.value_or("symmetrical");
  in.objective.kind = parse_objective(obj);
  in.objective.grid_price = in.scenario.grid_price;
  in.formulation = parse_formulation(form);
  return in;
}

inline RunOutput run_pf(const Inputs& in) {
  const FeederModel& m = in.model;
  PowerFlowSolution pf = solve_power_flow(m, BusInjections(m.buses.size(), PhaseArray{}), in.cfg.voltreg.pf);
  Report r = make_report(m, "pf");
  r.summary.push_back({"status", "converged"});
  r.profiles.push_back({"oracle", pf.voltages});
  const std::string seg = cli_detail::head_segment(m, in.scenario);
  if (!seg.empty()) r.head_flows.push_back(cli_detail::head_flow(m, "oracle", seg, feeder_head_flows(m, pf, seg)));
  return {kExitOk, write_report(r, parse_report_format(in.cfg.format))};
}

inline OpfRun solve_opf(const Inputs& in, Formulation f) {
  SdpOptions opts;
  opts.formulation = f;
  opts.objective = in.objective;
  auto backend = conic::default_backend(in.cfg.solver);
  return run_opf_with_load_update(in.model, opts, *backend, in.cfg.loop);
}

inline void describe_opf(Report& r, const std::string& prefix, const OpfRun& run) {
  using cli_detail::fmt;
  const OpfSolution& s = run.solution;
  r.summary.push_back({prefix + "status", conic::to_string(s.status.tag)});
  r.summary.push_back({prefix + "iterations", std::to_string(run.trace.records.size())});
  r.summary.push_back({prefix + "converged", run.trace.converged ? "true" : "false"});
  r.summary.push_back({prefix + "objective", fmt(s.objective, "%.8g")});
  r.summary.push_back({prefix + "max_rank1_gap", fmt(s.max_gap, "%.3e")});
  r.summary.push_back({prefix + "physical", s.physical ? "true" : "false"});
}

inline RunOutput run_opf(const Inputs& in) {
  const FeederModel& m = in.model;
  OpfRun run = solve_opf(in, in.formulation);
  Report r = make_report(m, "opf");
  r.summary.push_back({"formulation", to_string(in.formulation)});
  r.summary.push_back({"objective_kind", to_string(in.objective.kind)});
  describe_opf(r, "", run);
  const int code = cli_detail::exit_for(run.solution.status, run.trace.converged);
  if (run.solution.status.ok()) {
    r.profiles.push_back({"sdp", run.solution.voltages});
    const std::string seg = cli_detail::head_segment(m, in.scenario);
    if (!seg.empty())
      r.head_flows.push_back(cli_detail::head_flow(m, "sdp", seg, cli_detail::sdp_head_flow(m, run.solution, seg)));
    cli_detail::add_dispatch(r, m, run.solution.dispatch);
  }
  cli_detail::add_opf_trace(r, "opf", run);
  return {code, write_report(r, parse_report_format(in.cfg.format))};
}

inline RunOutput run_voltreg(const Inputs& in) {
  const FeederModel& m = in.model;
  VoltRegOptions opts = in.cfg.voltreg;
  opts.formulation = in.formulation;
  // Voltage regulation prices supply, not losses; an explicit objective wins.
  opts.objective = in.objective;
  if (in.cfg.objective.empty() && !in.scenario.objective) opts.objective.kind = ObjectiveKind::supply_cost;
  auto backend = conic::default_backend(in.cfg.solver);
  VoltRegSolution sol = run_voltage_regulation(m, opts, *backend);
  Report r = make_report(m, "voltreg");
  r.summary.push_back({"formulation", to_string(opts.formulation)});
  r.summary.push_back({"objective_kind", to_string(opts.objective.kind)});
  r.summary.push_back({"converged", sol.converged ? "true" : "false"});
  r.summary.push_back({"iterations", std::to_string(sol.iterations.size())});
  r.summary.push_back({"violation_pu", cli_detail::fmt(sol.violation, "%.3e")});
  if (!sol.message.empty()) r.summary.push_back({"message", sol.message});
  r.profiles.push_back({"oracle at dispatch", sol.voltages});
  cli_detail::add_dispatch(r, m, sol.dispatch);
  const std::string seg = cli_detail::head_segment(m, in.scenario);
  if (!seg.empty()) {
    PowerFlowSolution pf = solve_power_flow(m, dispatch_injections(m, sol.dispatch), opts.pf);
    r.head_flows.push_back(cli_detail::head_flow(m, "oracle", seg, feeder_head_flows(m, pf, seg)));
  }
  bool all_solved = true, any_failed = false;
  for (const auto& it : sol.iterations) {
    all_solved = all_solved && it.status.tag == conic::SolveTag::Solved;
    any_failed = any_failed || !it.status.ok();
    r.trace.push_back({"voltreg",
                       it.iteration,
                       {{"step_kw", it.max_delta_kw},
                        {"viol_before", it.violation_before},
                        {"viol_after", it.violation_after},
                        {"halved", it.halved ? 1.0 : 0.0}}});
  }
  int code = kExitOk;
  if (any_failed) code = kExitFailure;
  else if (!sol.converged || !all_solved) code = kExitInaccurate;
  return {code, write_report(r, parse_report_format(in.cfg.format))};
}

/// Runs the OPF with each formulation (concurrently), replays each dispatch
/// through the oracle and reports head-flow errors and rank-1 gaps.
inline RunOutput run_compare(const Inputs& in) {
  const FeederModel& m = in.model;
  std::vector<Formulation> forms;
  if (in.cfg.formulation.empty()) forms = {Formulation::bfm, Formulation::symmetrical};
  else forms = {in.formulation};
  std::vector<std::future<OpfRun>> jobs;
  for (Formulation f : forms) jobs.push_back(std::async(std::launch::async, [&in, f] { return solve_opf(in, f); }));
  std::vector<OpfRun> runs;
  for (auto& j : jobs) runs.push_back(j.get());

  Report r = make_report(m, "compare");
  r.summary.push_back({"objective_kind", to_string(in.objective.kind)});
  const std::string seg = cli_detail::head_segment(m, in.scenario);
  int code = kExitOk;
  bool oracle_added = false;
  for (std::size_t i = 0; i < forms.size(); ++i) {
    const std::string name = to_string(forms[i]);
    const OpfRun& run = runs[i];
    describe_opf(r, name + ".", run);
    code = std::max(code, cli_detail::exit_for(run.solution.status, run.trace.converged));
    cli_detail::add_opf_trace(r, name, run);
    if (!run.solution.status.ok()) continue;
    PowerFlowSolution pf = solve_power_flow(m, dispatch_injections(m, run.solution.dispatch), in.cfg.voltreg.pf);
    if (!oracle_added) {
      r.profiles.push_back({"oracle", pf.voltages});
      oracle_added = true;
    }
    r.profiles.push_back({name, run.solution.voltages});
    if (!seg.empty()) {
      r.head_flows.push_back(cli_detail::head_flow(m, "oracle/" + name, seg, feeder_head_flows(m, pf, seg)));
      r.head_flows.push_back(cli_detail::head_flow(m, name, seg, cli_detail::sdp_head_flow(m, run.solution, seg)));
      r.errors.push_back({name, flow_error(m, run.solution, pf, seg)});
    }
  }
  return {code, write_report(r, parse_report_format(in.cfg.format))};
}

inline std::string error_json(const std::string& kind, const std::string& msg, int line = 0, const std::string& field = "") {
  nlohmann::ordered_json j;
  j["error"] = kind;
  j["message"] = msg;
  if (line > 0) j["line"] = line;
  if (!field.empty()) j["field"] = field;
  return j.dump();
}

/// Full command-line entry point.  Report text goes to `out` (or --out),
/// errors to `err` as one JSON object per line.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequence-frame SDP optimal power flow for unbalanced radial feeders"};
  app.require_subcommand(1);
  RunConfig flags;
  std::string config_path, objective, formulation, format, out_path;
  app.add_option("--config", config_path, "run configuration file (default: $SEQOPF_CONFIG)");
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--feeder", flags.feeder, "feeder file or name in the data directory");
    sub->add_option("--scenario", flags.scenario, "scenario file or name");
    sub->add_option("--objective", objective, "loss-min | cost-min | supply-cost")
        ->check(CLI::IsMember({"loss-min", "cost-min", "supply-cost"}));
    sub->add_option("--formulation", formulation, "bfm | symmetrical")->check(CLI::IsMember({"bfm", "symmetrical"}));
    sub->add_option("--out", out_path, "write the report here instead of stdout");
    sub->add_option("--format", format, "table | csv | json")->check(CLI::IsMember({"table", "csv", "json"}));
  };
  CLI::App* pf = app.add_subcommand("pf", "oracle power flow");
  CLI::App* opf = app.add_subcommand("opf", "SDP OPF with the load-update loop");
  CLI::App* vr = app.add_subcommand("voltreg", "voltage regulation by DG dispatch");
  CLI::App* cmp = app.add_subcommand("compare", "OPF vs oracle head-flow errors per formulation");
  for (CLI::App* s : {pf, opf, vr, cmp}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << error_json("usage", e.what()) << "\n";
    return kExitFailure;
  }

  try {
    RunConfig cfg;
    if (config_path.empty())
      if (const char* env = std::getenv("SEQOPF_CONFIG")) config_path = env;
    if (!config_path.empty()) {
      try {
        cfg = parse_run_config(read_text_file(config_path));
      } catch (const ParseError& e) {
        throw ParseError(e.line(), e.field(), config_path + ": " + e.what());
      }
    }
    if (!flags.feeder.empty()) cfg.feeder = flags.feeder;
    if (!flags.scenario.empty()) cfg.scenario = flags.scenario;
    if (!objective.empty()) cfg.objective = objective;
    if (!formulation.empty()) cfg.formulation = formulation;
    if (!format.empty()) cfg.format = format;
    if (!out_path.empty()) cfg.out = out_path;
    parse_report_format(cfg.format);

    Inputs in = load_inputs(cfg);
    RunOutput res;
    if (*pf) res = run_pf(in);
    else if (*opf) res = run_opf(in);
    else if (*vr) res = run_voltreg(in);
    else res = run_compare(in);

    if (cfg.out.empty()) {
      out << res.text;
    } else {
      std::ofstream f(cfg.out, std::ios::binary);
      if (!f) throw RunError("io", "cannot write '" + cfg.out + "'");
      f << res.text;
    }
    return res.exit_code;
  } catch (const ParseError& e) {
    err << error_json("parse", e.what(), e.line(), e.field()) << "\n";
  } catch (const RunError& e) {
    err << error_json(e.kind(), e.what()) << "\n";
  } catch (const NumericError& e) {
    err << error_json("numeric", e.what()) << "\n";
  } catch (const ModelError& e) {
    err << error_json("model", e.what()) << "\n";
  } catch (const std::exception& e) {
    err << error_json("internal", e.what()) << "\n";
  }
  return kExitFailure;
}

}  // namespace seqopf::cli
