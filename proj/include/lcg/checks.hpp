#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lcg {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Self-verification suites: "gla", "grad", "mask", "codec", or "all".
/// Throws std::invalid_argument for any other name.
std::vector<CheckResult> run_suite(std::string_view name);

std::span<const std::string_view> suite_names();

}  // namespace lcg
