#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace grpolab {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct SelfTestSummary {
  std::vector<CriterionResult> results;
  bool all_pass = false;
  double total_seconds = 0.0;
};

// Runs the full acceptance suite at its stated scales. work_dir receives
// the file-producing criteria's run directories. The progress callback
// fires after each criterion finishes.
SelfTestSummary run_selftest(
    const std::filesystem::path& work_dir,
    const std::function<void(const CriterionResult&)>& progress = {});

}  // namespace grpolab
