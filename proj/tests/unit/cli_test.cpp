#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "../support/test_util.hpp"

namespace {

using followup::fixtures::TempDir;
namespace fs = std::filesystem;

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + FOLLOWUP_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string form_arg(int k) { return "\"" + followup::fixtures::replica_path(k).string() + "\""; }

}  // namespace

TEST(Cli, ValidateExitCodes) {
  TempDir dir("cli");
  const auto log = dir.path() / "log.txt";
  EXPECT_EQ(run_cli("validate " + form_arg(3), log), 0);

  auto doc = nlohmann::json::parse(followup::fixtures::slurp(followup::fixtures::faults_dir() / "fault-form.json"));
  doc["questions"][0]["triggers"][0]["then"] = {"nowhere"};
  std::ofstream(dir.path() / "dangling.json") << doc.dump();
  EXPECT_EQ(run_cli("validate \"" + (dir.path() / "dangling.json").string() + "\"", log), 1);
  EXPECT_NE(followup::fixtures::slurp(log).find("dangling-trigger-target"), std::string::npos);

  EXPECT_EQ(run_cli("validate \"" + (dir.path() / "missing.json").string() + "\"", log), 2);
  EXPECT_EQ(run_cli("frobnicate", log), 2);
}

TEST(Cli, ZeroRunsIsAUsageError) {
  TempDir dir("cli");
  EXPECT_EQ(run_cli("simulate --form " + form_arg(1) + " -n 0 --out \"" + dir.path().string() + "\"",
                    dir.path() / "log.txt"),
            2);
  EXPECT_EQ(run_cli("simulate --form " + form_arg(1) + " --patient robot --out \"" + dir.path().string() + "\"",
                    dir.path() / "log.txt"),
            2);
}

TEST(Cli, SimulateIsDeterministic) {
  TempDir a("cli"), b("cli");
  for (const auto* d : {&a, &b}) {
    ASSERT_EQ(run_cli("simulate --mode modular --form " + form_arg(1) + " --patient persona-2 --out \"" +
                          d->path().string() + "\"",
                      d->path() / "log.txt"),
              0);
  }
  const std::string run = "form-1-modular-persona-2-1";
  for (const auto* f : {"events.jsonl", "transcript.json", "record.json", "metrics.json"}) {
    EXPECT_EQ(followup::fixtures::slurp(a.path() / run / f), followup::fixtures::slurp(b.path() / run / f)) << f;
  }
  EXPECT_EQ(followup::fixtures::slurp(a.path() / "ledger.jsonl"), followup::fixtures::slurp(b.path() / "ledger.jsonl"));
}

TEST(Cli, KbBuildSameSeedSameFiles) {
  TempDir a("cli"), b("cli"), c("cli");
  for (const auto* d : {&a, &b}) {
    ASSERT_EQ(run_cli("kb-build --form " + form_arg(3) + " --seed 11 --out \"" + d->path().string() + "\"",
                      d->path() / "log.txt"),
              0);
  }
  ASSERT_EQ(run_cli("kb-build --form " + form_arg(3) + " --seed 12 --out \"" + c.path().string() + "\"",
                    c.path() / "log.txt"),
            0);
  const auto ex = [](const TempDir& d) { return followup::fixtures::slurp(d.path() / "form-3.examples.jsonl"); };
  EXPECT_FALSE(ex(a).empty());
  EXPECT_EQ(ex(a), ex(b));
  EXPECT_NE(ex(a), ex(c));
}

TEST(Cli, CompareWritesReport) {
  TempDir dir("cli");
  ASSERT_EQ(run_cli("compare --form " + form_arg(1) + " --out \"" + dir.path().string() + "\"", dir.path() / "log.txt"),
            0);
  const auto report = nlohmann::json::parse(followup::fixtures::slurp(dir.path() / "report.json"));
  ASSERT_EQ(report["forms"].size(), 1u);
  EXPECT_GT(report["forms"][0]["turn_reduction_pct"].get<double>(), 0.0);
}
