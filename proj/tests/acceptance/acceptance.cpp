#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "hpgkit/suite.hpp"

int main() {
  namespace fs = std::filesystem;
  hpgkit::suite::SuiteOptions o;
  o.cli_path = HPGKIT_CLI;
  const fs::path work = fs::current_path() / "acceptance-work";
  fs::create_directories(work);
  o.work_dir = work.string();
  o.log = [](const std::string& msg) { std::cerr << msg << "\n"; };
  int failed = 0;
  for (int id = 1; id <= hpgkit::suite::kCriteria; ++id) {
    const auto r = hpgkit::suite::run_criterion(id, o);
    std::cout << hpgkit::suite::format_result(r) << std::endl;
    failed += r.passed ? 0 : 1;
  }
  std::cout << (hpgkit::suite::kCriteria - failed) << "/" << hpgkit::suite::kCriteria << " criteria passed" << std::endl;
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
