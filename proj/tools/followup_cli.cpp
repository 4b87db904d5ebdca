/**
 * @file followup_cli.cpp
 * @brief Operator entry point: validate, cluster, kb-build, simulate, compare, serve.
 *
 * Exit codes: 0 success, 1 domain finding (invalid form, failed runs), 2 usage or I/O error.
 */
#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "followup/pipeline.hpp"
#include "followup/service.hpp"
#include "followup/sim_model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace followup;

namespace {

constexpr int kOk = 0;
constexpr int kFinding = 1;
constexpr int kUsage = 2;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << content;
}

/// "sim" | "sim-never-done" | "remote" | "scripted:<path>".
std::shared_ptr<Gateway> make_gateway(const std::string& selector) {
  if (selector == "sim" || selector == "sim-never-done") {
    SimModelConfig cfg;
    cfg.baseline_never_done = selector == "sim-never-done";
    return std::make_shared<Gateway>(std::make_shared<SimulatedModel>(cfg), GatewayConfig{},
                                     std::make_shared<SimClock>());
  }
  if (selector == "remote") {
    return std::make_shared<Gateway>(std::make_shared<RemoteBackend>(RemoteConfig::from_env()));
  }
  if (selector.starts_with("scripted:")) {
    const fs::path script = selector.substr(9);
    if (!fs::exists(script)) throw IoError("cannot read " + script.string());
    return std::make_shared<Gateway>(ScriptedBackend::load(script), GatewayConfig{}, std::make_shared<SimClock>());
  }
  throw CLI::ValidationError("--backend", "expected sim, sim-never-done, remote or scripted:<path>");
}

void print_findings(const std::vector<Finding>& findings) {
  for (const auto& f : findings) {
    std::cerr << "  " << (f.question_id.empty() ? "<form>" : f.question_id) << ": " << f.rule << ": " << f.detail
              << "\n";
  }
}

FormFixture load_checked(const fs::path& form) {
  if (!fs::exists(form)) throw IoError("cannot read " + form.string());
  return load_fixture(form);
}

struct RunOptions {
  std::vector<std::string> forms;
  std::vector<std::string> patients{"scripted"};
  std::string mode = "modular";
  std::string backend = "sim";
  std::string out = "out";
  std::size_t runs = 1;
  std::uint64_t seed = 7;
  int trials = 5;
  std::size_t cap = 4;
  std::size_t max_turns = 80;
  std::size_t max_reasks = 2;
};

ClusterConfig cluster_config(const RunOptions& o) {
  ClusterConfig c;
  c.trials = o.trials;
  c.group_cap = o.cap;
  return c;
}

KbConfig kb_config(const RunOptions& o) {
  KbConfig k;
  k.seed = o.seed;
  k.cluster = cluster_config(o);
  return k;
}

void write_run(const fs::path& dir, const RunOutcome& r) {
  std::string events;
  for (const auto& e : r.events) events += event_to_json(e).dump() + "\n";
  write_file(dir / "events.jsonl", events);
  write_file(dir / "transcript.json", json(r.state.transcript).dump(2));
  write_file(dir / "record.json", record_to_json(r.record).dump(2));
  write_file(dir / "metrics.json", metrics_to_json(r.metrics).dump(2));
}

/// Runs `o.runs` sessions of one mode for every form x patient; returns the metrics.
std::vector<RunMetrics> run_batch(const RunOptions& o, Mode mode, Gateway& gateway, const fs::path& out) {
  std::vector<RunMetrics> all;
  FlowConfig flow;
  flow.caps = {o.max_turns, o.max_reasks};
  flow.cluster = cluster_config(o);
  for (const auto& form_path : o.forms) {
    const auto fixture = load_checked(form_path);
    std::optional<ModularAssets> assets;
    if (mode == Mode::modular) assets = prepare_modular(fixture.form, gateway, flow.cluster, kb_config(o));
    for (const auto& patient_label : o.patients) {
      const auto selector = parse_patient(patient_label);
      for (std::size_t i = 1; i <= o.runs; ++i) {
        const auto sid = fixture.form.form_id + "-" + std::string(to_string(mode)) + "-" + patient_label + "-" +
                         std::to_string(i);
        auto patient = make_patient(selector, fixture, gateway, sid);
        auto r = mode == Mode::modular
                     ? run_modular(fixture, *assets, *patient, gateway, flow, sid, patient_label)
                     : run_baseline(fixture, *patient, gateway, flow.caps, sid, patient_label);
        write_run(out / sid, r);
        std::cout << sid << ": " << to_string(r.state.status)
                  << (r.state.abort_reason.empty() ? "" : " (" + r.state.abort_reason + ")")
                  << ", turns=" << r.metrics.system_turns << ", accuracy=" << r.metrics.accuracy
                  << ", tokens=" << r.metrics.tokens() << ", errors=" << r.metrics.errors.total() << "\n";
        all.push_back(r.metrics);
      }
    }
  }
  return all;
}

void add_run_flags(CLI::App* cmd, RunOptions& o, bool many_forms) {
  if (many_forms) {
    cmd->add_option("--form", o.forms, "Form document(s); ledgers are read from <stem>.ledger.json")->required();
  } else {
    cmd->add_option("--form", o.forms, "Form document; ledger is read from <stem>.ledger.json")
        ->required()
        ->expected(1);
  }
  cmd->add_option("--patient", o.patients, "scripted, scripted-vague, persona-1..3 (repeatable)");
  cmd->add_option("--backend", o.backend, "sim, sim-never-done, remote or scripted:<path>");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--runs,-n", o.runs, "Runs per form and patient");
  cmd->add_option("--seed", o.seed, "Seed for knowledge-base sampling");
  cmd->add_option("--trials", o.trials, "Clustering trials per bucket")->check(CLI::PositiveNumber);
  cmd->add_option("--cap", o.cap, "Maximum questions per group")->check(CLI::PositiveNumber);
  cmd->add_option("--max-turns", o.max_turns, "System turn cap")->check(CLI::PositiveNumber);
  cmd->add_option("--max-reasks", o.max_reasks, "Re-asks per group");
}

int cmd_validate(const std::string& path) {
  const auto doc = read_file(path);
  try {
    const auto form = parse_form(doc);
    const auto stats = form_stats(form);
    std::cout << form.form_id << ": ok (" << stats_to_json(stats).dump() << ")\n";
    return kOk;
  } catch (const FormError& e) {
    std::cerr << path << ": " << e.what() << "\n";
    print_findings(e.findings());
    return kFinding;
  }
}

int cmd_cluster(const RunOptions& o) {
  const auto fixture = load_checked(o.forms.front());
  auto gateway = make_gateway(o.backend);
  const auto grouping = cluster_form(fixture.form, *gateway, cluster_config(o));
  std::cout << preview_grouping(grouping);
  std::cout << "groups=" << grouping.groups.size() << " votes=" << grouping.vote_count << "\n";
  write_file(fs::path(o.out) / (fixture.form.form_id + ".grouping.json"), json(grouping).dump(2));
  return kOk;
}

int cmd_kb_build(const RunOptions& o) {
  const auto fixture = load_checked(o.forms.front());
  auto gateway = make_gateway(o.backend);
  const auto assets = prepare_modular(fixture.form, *gateway, cluster_config(o), kb_config(o));
  const fs::path out = o.out;
  const auto& id = fixture.form.form_id;
  fs::create_directories(out);
  assets.kb.save(out / (id + ".examples.jsonl"), out / (id + ".manifest.json"));
  write_file(out / (id + ".grouping.json"), json(assets.grouping).dump(2));
  for (const auto& w : assets.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << id << ": " << assets.kb.size() << " examples, " << assets.grouping.groups.size() << " groups\n";
  return kOk;
}

int cmd_simulate(const RunOptions& o) {
  if (o.runs == 0) throw CLI::ValidationError("--runs", "must be at least 1");
  if (o.mode != "modular" && o.mode != "baseline") throw CLI::ValidationError("--mode", "modular or baseline");
  auto gateway = make_gateway(o.backend);
  const fs::path out = o.out;
  const auto metrics = run_batch(o, mode_from(o.mode), *gateway, out);
  gateway->ledger().write_jsonl(out / "ledger.jsonl");
  json all = json::array();
  std::size_t incomplete = 0;
  double accuracy = 0.0;
  for (const auto& m : metrics) {
    all.push_back(metrics_to_json(m));
    accuracy += m.accuracy;
    if (!m.completed) ++incomplete;
  }
  write_file(out / "metrics.json", all.dump(2));
  std::cout << metrics.size() << " runs, " << incomplete << " incomplete, mean accuracy "
            << accuracy / static_cast<double>(metrics.size()) << "\n";
  return kOk;
}

int cmd_compare(const RunOptions& o) {
  if (o.runs == 0) throw CLI::ValidationError("--runs", "must be at least 1");
  auto gateway = make_gateway(o.backend);
  const fs::path out = o.out;
  const auto modular = run_batch(o, Mode::modular, *gateway, out / "modular");
  const auto baseline = run_batch(o, Mode::baseline, *gateway, out / "baseline");
  const auto report = compare_runs(modular, baseline);
  gateway->ledger().write_jsonl(out / "ledger.jsonl");
  write_file(out / "report.json", report_to_json(report).dump(2));
  std::cout << "\n" << report_table(report);
  return kOk;
}

HttpServer* g_server_for_signal = nullptr;

int cmd_serve(const std::string& addr, const std::string& data_dir, const std::string& backend,
              const std::string& token) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--addr", "expected host:port");
  const auto host = addr.substr(0, colon);
  const int port = std::stoi(addr.substr(colon + 1));
  ServiceConfig cfg;
  cfg.data_dir = data_dir;
  cfg.auth_token = token;
  SessionService service(cfg, make_gateway(backend));
  const auto active = service.recover();
  for (const auto& line : service.recovery_log()) std::cerr << "recovery: " << line << "\n";
  std::cout << "recovered " << active << " active session(s); listening on " << host << ":" << port << std::endl;
  HttpServer server(service);
  g_server_for_signal = &server;
  std::signal(SIGINT, [](int) {
    if (g_server_for_signal != nullptr) g_server_for_signal->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server_for_signal != nullptr) g_server_for_signal->stop();
  });
  return server.listen(host, port) ? kOk : kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modular follow-up dialogue engine"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Optional TOML/INI file; command-line flags win");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a form document");
  validate->add_option("form,--form", validate_path, "Form document")->required();

  RunOptions cluster_opts, kb_opts, sim_opts, cmp_opts;
  auto* cluster = app.add_subcommand("cluster", "Preview the question grouping of a form");
  add_run_flags(cluster, cluster_opts, false);
  auto* kb = app.add_subcommand("kb-build", "Build the extraction knowledge base of a form");
  add_run_flags(kb, kb_opts, false);
  auto* simulate = app.add_subcommand("simulate", "Run simulated sessions in one mode");
  add_run_flags(simulate, sim_opts, true);
  simulate->add_option("--mode", sim_opts.mode, "modular or baseline");
  auto* compare = app.add_subcommand("compare", "Run both modes on identical configurations and report");
  add_run_flags(compare, cmp_opts, true);

  std::string addr = "127.0.0.1:8080", data_dir = "data/service", serve_backend = "sim", token;
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API");
  serve->add_option("--addr", addr, "host:port");
  serve->add_option("--data-dir", data_dir, "Forms, knowledge bases and session logs");
  serve->add_option("--backend", serve_backend, "sim, remote or scripted:<path>");
  serve->add_option("--token", token, "Require this X-Followup-Token on mutating requests");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*validate) return cmd_validate(validate_path);
    if (*cluster) return cmd_cluster(cluster_opts);
    if (*kb) return cmd_kb_build(kb_opts);
    if (*simulate) return cmd_simulate(sim_opts);
    if (*compare) return cmd_compare(cmp_opts);
    if (*serve) return cmd_serve(addr, data_dir, serve_backend, token);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormError& e) {
    std::cerr << "invalid form: " << e.what() << "\n";
    print_findings(e.findings());
    return kFinding;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFinding;
  }
  return kUsage;
}
