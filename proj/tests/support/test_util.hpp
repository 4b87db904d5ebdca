#pragma once

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "followup/gateway.hpp"
#include "followup/pipeline.hpp"
#include "followup/sim_model.hpp"

namespace followup::fixtures {

inline const std::filesystem::path kSourceDir = FOLLOWUP_SOURCE_DIR;

inline std::shared_ptr<Gateway> sim_gateway(bool never_done = false) {
  SimModelConfig cfg;
  cfg.baseline_never_done = never_done;
  return std::make_shared<Gateway>(std::make_shared<SimulatedModel>(cfg), GatewayConfig{},
                                   std::make_shared<SimClock>());
}

inline std::shared_ptr<Gateway> queued_gateway(std::vector<ScriptedReply> replies) {
  GatewayConfig cfg;
  cfg.backoff_base = std::chrono::milliseconds(1);
  return std::make_shared<Gateway>(ScriptedBackend::queue(std::move(replies)), cfg, std::make_shared<SimClock>());
}

inline std::filesystem::path replica_path(int k) {
  return kSourceDir / "data" / "forms" / ("form-" + std::to_string(k) + ".json");
}

inline FormFixture replica(int k) { return load_fixture(replica_path(k)); }

inline std::filesystem::path faults_dir() { return kSourceDir / "tests" / "data" / "faults"; }

/// Six-question form with one trigger: smoking "former" asks for years since quitting.
inline FormFixture small_fixture() { return load_fixture(faults_dir() / "fault-form.json"); }

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("followup-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(++counter));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace followup::fixtures
