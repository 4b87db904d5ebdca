#include "followup/pipeline.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace followup {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path sibling(const std::filesystem::path& form_path, std::string_view suffix) {
  auto p = form_path;
  p.replace_filename(form_path.stem().string() + std::string(suffix));
  return p;
}

}  // namespace

FormFixture load_fixture(const std::filesystem::path& form_path, const std::filesystem::path& ledger_path) {
  FormFixture f;
  f.form = parse_form(read_file(form_path));
  const auto ledger = ledger_path.empty() ? sibling(form_path, ".ledger.json") : ledger_path;
  if (std::filesystem::exists(ledger)) f.ledger = load_ledger(ledger);
  const auto phrasing = sibling(form_path, ".phrasing.json");
  if (std::filesystem::exists(phrasing)) f.phrasing = PhrasingTable::from_json(json::parse(read_file(phrasing)));
  return f;
}

PatientSelector parse_patient(std::string_view s) {
  PatientSelector sel;
  sel.label = std::string(s);
  if (s == "scripted") return sel;
  if (s == "scripted-vague") {
    sel.digression_every = 5;
    return sel;
  }
  if (s.starts_with("persona-") && s.size() == 9 && s[8] >= '1' && s[8] <= '3') {
    sel.kind = PatientSelector::Kind::persona;
    sel.persona_index = static_cast<std::size_t>(s[8] - '1');
    return sel;
  }
  throw std::invalid_argument("unknown patient '" + std::string(s) +
                              "' (scripted, scripted-vague, persona-1, persona-2, persona-3)");
}

std::unique_ptr<Patient> make_patient(const PatientSelector& sel, const FormFixture& fixture, Gateway& gateway,
                                      const std::string& session_id) {
  if (sel.kind == PatientSelector::Kind::scripted) {
    return std::make_unique<ScriptedPatient>(fixture.form, fixture.ledger, fixture.phrasing, sel.digression_every);
  }
  auto personas = make_personas();
  std::optional<GroundTruthLedger> ledger;
  if (!fixture.ledger.empty()) ledger = fixture.ledger;
  return std::make_unique<PersonaPatient>(fixture.form, personas.at(sel.persona_index), sel.persona_index, gateway,
                                          session_id, std::move(ledger));
}

ModularAssets prepare_modular(const FormSpec& form, Gateway& gateway, const ClusterConfig& cluster,
                              const KbConfig& kb) {
  ModularAssets a;
  a.grouping = cluster_form(form, gateway, cluster);
  KbConfig cfg = kb;
  cfg.cluster = cluster;
  auto built = build_kb(form, a.grouping, make_personas(), gateway, cfg);
  a.kb = std::move(built.kb);
  a.warnings = std::move(built.warnings);
  return a;
}

MeterTotals system_tokens(const MeterLedger& ledger, std::string_view session_id) {
  MeterTotals t;
  for (const auto& r : ledger.records()) {
    if (r.session_id == session_id && r.tag != tags::patient) t.add(r);
  }
  return t;
}

RunContext run_context(const SessionState& state) {
  RunContext c;
  c.mode = state.mode;
  c.completed = state.status == SessionStatus::completed;
  if (!state.plan.empty()) c.first_group = state.plan.front().member_ids;
  c.exhausted = state.exhausted;
  return c;
}

namespace {

RunOutcome finish(SessionState state, std::vector<SessionEvent> events, const FormFixture& fixture, Gateway& gateway,
                  const std::string& patient_label, const EvalConfig& eval) {
  RunOutcome out;
  const auto tokens = system_tokens(gateway.ledger(), state.session_id);
  out.record = finalize(state, fixture.form, tokens);
  out.metrics = compute_metrics(state, fixture.form, fixture.ledger, tokens, run_context(state), patient_label, eval);
  out.state = std::move(state);
  out.events = std::move(events);
  return out;
}

}  // namespace

RunOutcome run_modular(const FormFixture& fixture, const ModularAssets& assets, Patient& patient, Gateway& gateway,
                       const FlowConfig& config, const std::string& session_id, const std::string& patient_label,
                       const EvalConfig& eval) {
  std::vector<SessionEvent> events;
  FlowEnv env{fixture.form, gateway, &assets.kb, config, {}, &events};
  auto state = start_session(fixture.form, assets.grouping, session_id, env);
  while (!state.terminal()) {
    const Turn question = *last_question(state);
    step(state, patient.reply(question), env);
  }
  return finish(std::move(state), std::move(events), fixture, gateway, patient_label, eval);
}

RunOutcome run_baseline(const FormFixture& fixture, Patient& patient, Gateway& gateway, const Caps& caps,
                        const std::string& session_id, const std::string& patient_label, const EvalConfig& eval) {
  auto run = run_baseline_session(fixture.form, patient, gateway, caps, session_id);
  return finish(std::move(run.state), std::move(run.events), fixture, gateway, patient_label, eval);
}

}  // namespace followup
