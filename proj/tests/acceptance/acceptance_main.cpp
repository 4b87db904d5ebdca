/**
 * @file acceptance_main.cpp
 * @brief End-to-end acceptance checks; prints one PASS/FAIL line per criterion.
 */
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "../support/random_form.hpp"
#include "followup/baseline.hpp"
#include "followup/clustering.hpp"
#include "followup/eval.hpp"
#include "followup/flow.hpp"
#include "followup/pipeline.hpp"
#include "followup/service.hpp"
#include "followup/sim_model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace followup;

namespace {

// Pinned tolerances.
constexpr std::size_t kCoverageForms = 200;
constexpr double kCoverageBudgetS = 10.0;
constexpr double kMinTurnReductionPct = 40.0;
constexpr double kMinGroupSize = 2.0;
constexpr std::size_t kGroupCap = 4;
constexpr std::size_t kTokenTurns = 20;
constexpr double kMinPromptRatio = 3.0;
constexpr std::size_t kVoteCases = 1000;
constexpr std::size_t kCrashEvents = 15;
constexpr std::size_t kBaselineCap = 80;

const fs::path kSource = FOLLOWUP_SOURCE_DIR;

std::shared_ptr<Gateway> sim_gateway(bool never_done = false) {
  SimModelConfig cfg;
  cfg.baseline_never_done = never_done;
  return std::make_shared<Gateway>(std::make_shared<SimulatedModel>(cfg), GatewayConfig{},
                                   std::make_shared<SimClock>());
}

ClusterConfig capped() {
  ClusterConfig c;
  c.group_cap = kGroupCap;
  return c;
}

ServiceConfig service_config(const fs::path& dir) {
  ServiceConfig c;
  c.data_dir = dir;
  return c;
}

FormFixture replica(int k) { return load_fixture(kSource / "data" / "forms" / ("form-" + std::to_string(k) + ".json")); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

std::string join(const std::set<std::string>& s) {
  std::string out;
  for (const auto& x : s) out += (out.empty() ? "" : ",") + x;
  return out;
}

// ---------------------------------------------------------------------------

Outcome coverage_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t mismatches = 0;
  std::size_t wrong_values = 0;
  std::size_t branching = 0, fired = 0, exhausted = 0;
  std::string first;
  for (std::size_t i = 0; i < kCoverageForms; ++i) {
    auto fx = fixtures::random_fixture(1000 + i);
    const auto report = validate_form(fx.form);
    if (!report.ok()) {
      ++mismatches;
      if (first.empty()) first = fx.form.form_id + " invalid: " + report.findings.front().rule;
      continue;
    }
    auto gw = sim_gateway();
    FormFixture fixture{fx.form, fx.ledger, {}};
    const auto assets = prepare_modular(fixture.form, *gw, capped());
    ScriptedPatient patient(fixture.form, fixture.ledger);
    const auto sid = "cov-" + std::to_string(i);
    const auto out = run_modular(fixture, assets, patient, *gw, FlowConfig{}, sid, "scripted");

    std::set<std::string> covered;
    for (const auto& [id, a] : out.state.answers) {
      if (!a.has_intent()) continue;
      covered.insert(id);
      if (!answers_match(a, fixture.ledger.at(id))) ++wrong_values;
    }
    bool overlap = false;
    for (const auto& id : out.state.exhausted) overlap |= !covered.insert(id).second;
    const auto expected = fixtures::oracle_reachable(fixture.form, fixture.ledger);
    branching += form_stats(fixture.form).branching ? 1 : 0;
    for (const auto& id : expected) fired += fixture.form.at(id).conditional ? 1 : 0;
    exhausted += out.state.exhausted.size();
    if (covered != expected || overlap || out.state.status != SessionStatus::completed) {
      ++mismatches;
      if (first.empty()) first = sid + " got {" + join(covered) + "} want {" + join(expected) + "}";
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Outcome o;
  o.pass = mismatches == 0 && wrong_values == 0 && secs < kCoverageBudgetS;
  o.detail = std::to_string(kCoverageForms) + " forms, " + std::to_string(mismatches) + " mismatches, " +
             std::to_string(wrong_values) + " wrong values (" + std::to_string(branching) + " branching, " +
             std::to_string(fired) + " conditional items reached, " + std::to_string(exhausted) + " exhausted), " +
             fmt(secs) + " s (limit " + fmt(kCoverageBudgetS, 0) +
             " s)" + (first.empty() ? "" : "; first: " + first);
  return o;
}

Outcome zero_pathology() {
  Outcome o{true, ""};
  for (int k = 1; k <= 3; ++k) {
    const auto fixture = replica(k);
    auto gw = sim_gateway();
    const auto assets = prepare_modular(fixture.form, *gw, capped());
    ScriptedPatient patient(fixture.form, fixture.ledger, fixture.phrasing);
    const auto out = run_modular(fixture, assets, patient, *gw, FlowConfig{}, "zp-" + std::to_string(k), "scripted");
    const auto& m = out.metrics;
    const bool ok = m.errors.total() == 0 && m.accuracy == 1.0 && m.completed;
    o.pass &= ok;
    o.detail += (k > 1 ? "; " : "") + fixture.form.form_id + " (" + std::to_string(fixture.form.questions.size()) +
                " q): errors " + std::to_string(m.errors.total()) + ", accuracy " + fmt(m.accuracy, 3);
  }
  return o;
}

Outcome detector_suite() {
  const auto dir = kSource / "tests" / "data" / "faults";
  const auto form = parse_form_json(json::parse(std::ifstream(dir / "fault-form.json")));
  const auto ledger = load_ledger(dir / "fault-form.ledger.json");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.path().extension() == ".json" && !name.starts_with("fault-form")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Outcome o{true, ""};
  std::size_t faults = 0;
  for (const auto& path : files) {
    const auto fx = json::parse(std::ifstream(path));
    Transcript t = fx.at("transcript").get<Transcript>();
    RunContext ctx;
    ctx.mode = mode_from(fx["context"].value("mode", std::string("baseline")));
    ctx.completed = fx["context"].value("completed", true);
    ErrorCounts want;
    for (const auto& [cat, n] : fx.at("expected").items()) want[*error_category_from(cat)] = n.get<std::size_t>();
    const auto got = detect_errors(t, form, ledger, ctx);
    if (want.total() > 0) ++faults;
    if (!(got == want)) {
      o.pass = false;
      o.detail += path.stem().string() + ": got " + error_counts_json(got, ctx.mode).dump() + "; ";
    }
  }
  o.pass &= faults == 7;
  o.detail += std::to_string(faults) + " fault fixtures + " + std::to_string(files.size() - faults) +
              " clean, exact counts, no cross-category hits";
  return o;
}

Outcome turn_efficiency() {
  const auto fixture = replica(2);
  auto gw = sim_gateway();
  const auto assets = prepare_modular(fixture.form, *gw, capped());
  const double mean_size = static_cast<double>(fixture.form.questions.size()) /
                           static_cast<double>(assets.grouping.groups.size());
  ScriptedPatient mp(fixture.form, fixture.ledger, fixture.phrasing);
  const auto mod = run_modular(fixture, assets, mp, *gw, FlowConfig{}, "te-mod", "scripted");
  ScriptedPatient bp(fixture.form, fixture.ledger, fixture.phrasing);
  const auto base = run_baseline(fixture, bp, *gw, Caps{}, "te-base", "scripted");
  const auto report = compare_runs({mod.metrics}, {base.metrics});
  const auto red = report.forms.at(0).turn_reduction_pct.value_or(0.0);
  Outcome o;
  o.pass = mean_size >= kMinGroupSize && red >= kMinTurnReductionPct;
  o.detail = "cap " + std::to_string(kGroupCap) + ", mean group size " + fmt(mean_size) + ", turns " +
             std::to_string(mod.metrics.system_turns) + " vs " + std::to_string(base.metrics.system_turns) +
             ", reduction " + fmt(red, 1) + "% (min " + fmt(kMinTurnReductionPct, 0) + "%)";
  return o;
}

Outcome token_ratio() {
  auto fixture = replica(2);
  fixture.form.questions.resize(kTokenTurns);
  fixture.form.form_id = "form-2-first20";
  GroundTruthLedger ledger;
  for (const auto& q : fixture.form.questions) ledger.emplace(q.question_id, fixture.ledger.at(q.question_id));
  fixture.ledger = std::move(ledger);

  auto gw = sim_gateway();
  const auto assets = prepare_modular(fixture.form, *gw, capped());
  ScriptedPatient mp(fixture.form, fixture.ledger);
  const auto mod = run_modular(fixture, assets, mp, *gw, FlowConfig{}, "tok-mod", "scripted");
  ScriptedPatient bp(fixture.form, fixture.ledger);
  const auto base = run_baseline(fixture, bp, *gw, Caps{}, "tok-base", "scripted");

  const double ratio = static_cast<double>(base.metrics.prompt_tokens) / static_cast<double>(mod.metrics.prompt_tokens);

  // Ledger totals against a fresh sum of the per-call records.
  const auto& ledger_ref = gw->ledger();
  const auto records = ledger_ref.records();
  MeterTotals sum;
  std::map<std::string, MeterTotals> by_tag, by_session;
  for (const auto& r : records) {
    sum.add(r);
    by_tag[r.tag].add(r);
    by_session[r.session_id].add(r);
  }
  auto same = [](const MeterTotals& a, const MeterTotals& b) {
    return a.requests == b.requests && a.prompt_tokens == b.prompt_tokens && a.completion_tokens == b.completion_tokens;
  };
  bool sums_ok = same(sum, ledger_ref.totals());
  for (const auto& [tag, t] : by_tag) sums_ok &= same(t, ledger_ref.by_tag(tag));
  for (const auto& [sid, t] : by_session) sums_ok &= same(t, ledger_ref.by_session(sid));
  MeterTotals base_sys = system_tokens(ledger_ref, "tok-base");
  sums_ok &= base_sys.prompt_tokens == base.metrics.prompt_tokens;

  Outcome o;
  o.pass = base.metrics.system_turns == kTokenTurns && ratio >= kMinPromptRatio && sums_ok;
  o.detail = "baseline " + std::to_string(base.metrics.system_turns) + " turns, prompt tokens " +
             std::to_string(base.metrics.prompt_tokens) + " vs " + std::to_string(mod.metrics.prompt_tokens) +
             " = " + fmt(ratio) + "x (min " + fmt(kMinPromptRatio, 1) + "x); ledger " + std::to_string(records.size()) +
             " records, sums " + (sums_ok ? "exact" : "MISMATCH");
  return o;
}

// Independent oracle for the vote.
IdLists canon(IdLists l) {
  for (auto& g : l) std::sort(g.begin(), g.end());
  std::sort(l.begin(), l.end());
  return l;
}

std::optional<IdLists> oracle_vote(const std::vector<std::optional<IdLists>>& trials) {
  std::map<IdLists, int> counts;
  for (const auto& t : trials) {
    if (t) ++counts[canon(*t)];
  }
  std::optional<IdLists> best;
  int best_n = 0;
  for (const auto& [sig, n] : counts) {
    if (!best || n > best_n || (n == best_n && sig.size() < best->size()) ||
        (n == best_n && sig.size() == best->size() && sig < *best)) {
      best = sig;
      best_n = n;
    }
  }
  return best;
}

IdLists random_partition(const std::vector<std::string>& ids, std::size_t cap, std::mt19937_64& rng) {
  auto shuffled = ids;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  IdLists out;
  std::size_t i = 0;
  while (i < shuffled.size()) {
    const std::size_t n = std::min(fixtures::pick(rng, 1, cap), shuffled.size() - i);
    out.emplace_back(shuffled.begin() + static_cast<std::ptrdiff_t>(i), shuffled.begin() + static_cast<std::ptrdiff_t>(i + n));
    i += n;
  }
  return out;
}

IdLists scramble(IdLists l, std::mt19937_64& rng) {
  for (auto& g : l) std::shuffle(g.begin(), g.end(), rng);
  std::shuffle(l.begin(), l.end(), rng);
  return l;
}

Outcome majority_vote_check() {
  std::mt19937_64 rng(4242);
  std::size_t failures = 0;
  std::string first;
  for (std::size_t c = 0; c < kVoteCases; ++c) {
    const std::size_t n = fixtures::pick(rng, 1, 8);
    std::vector<QuestionSpec> qs(n);
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) {
      qs[i].question_id = "v" + std::to_string(i);
      qs[i].ordinal = i;
      qs[i].options = {{"a", "a"}, {"b", "b"}};
      ids.push_back(qs[i].question_id);
    }
    std::vector<const QuestionSpec*> refs;
    for (const auto& q : qs) refs.push_back(&q);

    // A few distinct proposals, each repeated, plus occasional malformed trials.
    std::vector<IdLists> pool(fixtures::pick(rng, 1, 3));
    for (auto& p : pool) p = random_partition(ids, kGroupCap, rng);
    std::vector<std::optional<IdLists>> trials;
    const std::size_t t = fixtures::pick(rng, 1, 7);
    for (std::size_t k = 0; k < t; ++k) {
      if (fixtures::chance(rng, 0.1)) {
        trials.emplace_back(std::nullopt);
      } else {
        trials.emplace_back(scramble(pool[fixtures::pick(rng, 0, pool.size() - 1)], rng));
      }
    }
    const auto got = majority_vote(trials);
    const auto want = oracle_vote(trials);
    bool ok = got.winner == want;
    if (got.winner) ok &= !grouping_violation(*got.winner, refs, kGroupCap).has_value();
    for (int p = 0; p < 3 && ok; ++p) {
      auto perm = trials;
      std::shuffle(perm.begin(), perm.end(), rng);
      for (auto& x : perm) {
        if (x) x = scramble(*x, rng);
      }
      const auto again = majority_vote(perm);
      ok &= again.winner == got.winner && again.count == got.count;
    }
    if (!ok) {
      ++failures;
      if (first.empty()) first = "case " + std::to_string(c);
    }
  }

  // Tie-break table.
  using T = std::vector<std::optional<IdLists>>;
  struct Row {
    const char* name;
    T trials;
    std::optional<IdLists> winner;
    int count;
  };
  const IdLists two = {{"a", "b"}, {"c"}};
  const IdLists three = {{"a"}, {"b"}, {"c"}};
  const IdLists two_alt = {{"a"}, {"b", "c"}};
  const std::vector<Row> table = {
      {"majority", {three, three, two}, three, 2},
      {"tie fewer groups", {three, two}, two, 1},
      {"tie same size lexicographic", {two_alt, two}, IdLists{{"a"}, {"b", "c"}}, 1},
      {"malformed ignored", {std::nullopt, std::nullopt, three}, three, 1},
      {"all malformed", {std::nullopt, std::nullopt}, std::nullopt, 0},
      {"order within groups", {IdLists{{"b", "a"}, {"c"}}, IdLists{{"c"}, {"a", "b"}}, three}, two, 2},
  };
  std::size_t table_fail = 0;
  for (const auto& row : table) {
    const auto r = majority_vote(row.trials);
    if (r.winner != row.winner || r.count != row.count) {
      ++table_fail;
      if (first.empty()) first = std::string("table row '") + row.name + "'";
    }
  }
  Outcome o;
  o.pass = failures == 0 && table_fail == 0;
  o.detail = std::to_string(kVoteCases) + " fuzzed cases, " + std::to_string(failures) + " failures; tie-break table " +
             std::to_string(table.size() - table_fail) + "/" + std::to_string(table.size()) +
             (first.empty() ? "" : "; first: " + first);
  return o;
}

// ---------------------------------------------------------------------------

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Drives a live service session with the scripted patient until it ends.
void drive(SessionService& svc, const std::string& sid, const FormFixture& fixture, std::size_t& msg_counter) {
  ScriptedPatient patient(fixture.form, fixture.ledger, fixture.phrasing);
  for (;;) {
    const auto state = svc.snapshot(sid);
    if (state.terminal()) return;
    const auto* q = last_question(state);
    if (q == nullptr) throw std::logic_error("no question to answer");
    svc.post_message(sid, json{{"client_msg_id", "m" + std::to_string(++msg_counter)}, {"text", patient.reply(*q)}});
  }
}

Outcome crash_recovery() {
  const auto fixture = replica(1);
  const auto root = fs::temp_directory_path() / ("followup-accept-" + std::to_string(::getpid()));
  fs::remove_all(root);
  const auto base = root / "base";
  {
    SessionService svc(service_config(base), sim_gateway());
    svc.put_form(json{{"form", form_to_json(fixture.form)}, {"ledger", ledger_to_json(fixture.ledger)}});
  }
  const std::string sid = "crash";

  // Reference run without interruption.
  SessionState reference;
  std::size_t total_events = 0;
  {
    const auto dir = root / "reference";
    fs::copy(base, dir, fs::copy_options::recursive);
    SessionService svc(service_config(dir), sim_gateway());
    svc.create_session(json{{"form_id", fixture.form.form_id}, {"mode", "modular"}, {"session_id", sid}});
    std::size_t counter = 0;
    drive(svc, sid, fixture, counter);
    reference = svc.snapshot(sid);
    total_events = reference.next_seq - 1;
  }

  std::size_t identical = 0;
  std::size_t completed_same = 0;
  std::string first;
  for (std::size_t k = 1; k <= kCrashEvents; ++k) {
    const auto dir = root / ("trial-" + std::to_string(k));
    fs::copy(base, dir, fs::copy_options::recursive);
    const auto dump_path = root / ("live-" + std::to_string(k) + ".json");
    std::cout.flush();
    const pid_t pid = ::fork();
    if (pid == 0) {
      ServiceConfig cfg = service_config(dir);
      cfg.on_event = [&](const SessionEvent& e, const SessionState& live) {
        if (e.seq != k) return;
        std::ofstream(dump_path, std::ios::binary) << state_to_json(live).dump();
        std::_Exit(0);  // no destructors, no flushing: a hard stop right after the durable append
      };
      SessionService svc(cfg, sim_gateway());
      svc.create_session(json{{"form_id", fixture.form.form_id}, {"mode", "modular"}, {"session_id", sid}});
      std::size_t counter = 0;
      drive(svc, sid, fixture, counter);
      std::_Exit(3);  // the kill point was never reached
    }
    int status = 0;
    ::waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      if (first.empty()) first = "trial " + std::to_string(k) + " child did not stop at its kill point";
      continue;
    }
    SessionService svc(service_config(dir), sim_gateway());
    svc.recover();
    const auto replayed = state_to_json(svc.snapshot(sid)).dump();
    if (replayed == read_all(dump_path)) {
      ++identical;
    } else if (first.empty()) {
      first = "trial " + std::to_string(k) + " replay differs";
    }
    try {
      svc.resume(sid);
      std::size_t counter = 1000;
      drive(svc, sid, fixture, counter);
      const auto done = svc.snapshot(sid);
      if (done.status == SessionStatus::completed && done.answers == reference.answers) ++completed_same;
    } catch (const std::exception& ex) {
      if (first.empty()) first = "trial " + std::to_string(k) + " resume failed: " + ex.what();
    }
  }
  fs::remove_all(root);
  Outcome o;
  o.pass = total_events == kCrashEvents && identical == kCrashEvents && completed_same == kCrashEvents;
  o.detail = std::to_string(total_events) + "-event session, " + std::to_string(identical) + "/" +
             std::to_string(kCrashEvents) + " byte-identical replays, " + std::to_string(completed_same) + "/" +
             std::to_string(kCrashEvents) + " resumed to the same answers" + (first.empty() ? "" : "; first: " + first);
  return o;
}

Outcome baseline_cap() {
  const auto fixture = replica(1);
  auto never = sim_gateway(true);
  ScriptedPatient p1(fixture.form, fixture.ledger, fixture.phrasing);
  const auto stuck = run_baseline(fixture, p1, *never, Caps{}, "cap-0", "scripted");
  const auto calls = never->ledger().by_session_tag("cap-0", tags::baseline).requests;

  auto gw = sim_gateway();
  ScriptedPatient p2(fixture.form, fixture.ledger, fixture.phrasing);
  const auto ok_run = run_baseline(fixture, p2, *gw, Caps{}, "cap-1", "scripted");
  const auto assets = prepare_modular(fixture.form, *gw, capped());
  ScriptedPatient p3(fixture.form, fixture.ledger, fixture.phrasing);
  const auto mod = run_modular(fixture, assets, p3, *gw, FlowConfig{}, "cap-m", "scripted");
  const auto report = compare_runs({mod.metrics}, {stuck.metrics, ok_run.metrics});
  const auto& f = report.forms.at(0);
  const bool footnote = std::any_of(report.footnotes.begin(), report.footnotes.end(), [](const std::string& s) {
    return s.find("did not complete") != std::string::npos && s.find("excluded from the turn average") != std::string::npos;
  });

  Outcome o;
  o.pass = stuck.state.turn_count == kBaselineCap && stuck.state.status == SessionStatus::aborted &&
           stuck.state.abort_reason == "turn_cap" && calls == static_cast<std::int64_t>(kBaselineCap) &&
           f.baseline_incomplete == 1 && f.baseline_turns == static_cast<double>(ok_run.metrics.system_turns) &&
           footnote;
  o.detail = "aborted at " + std::to_string(stuck.state.turn_count) + " turns (" + stuck.state.abort_reason + "), " +
             std::to_string(calls) + " baseline calls; excluded " + std::to_string(f.baseline_incomplete) +
             " run, mean baseline turns " + fmt(f.baseline_turns.value_or(-1), 1) + ", footnote " +
             (footnote ? "present" : "MISSING");
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"coverage-oracle", coverage_oracle},   {"zero-pathology", zero_pathology},
      {"error-detectors", detector_suite},    {"turn-efficiency", turn_efficiency},
      {"token-ratio", token_ratio},           {"majority-vote", majority_vote_check},
      {"crash-recovery", crash_recovery},     {"baseline-cap", baseline_cap},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
