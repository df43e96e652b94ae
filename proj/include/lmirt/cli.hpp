#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lmirt::cli {

enum ExitCode { kOk = 0, kValidation = 1, kEstimation = 2 };

struct RunConfig {
  std::filesystem::path data;
  std::filesystem::path covariates;
  std::filesystem::path model;
  std::filesystem::path out = ".";
  int starts = 10;
  std::uint64_t seed = 1;
  double tol = 1e-8;
  int max_iter = 5000;
  int bootstrap = 0;
  int workers = 1;

  // test
  std::filesystem::path null_model;
  std::filesystem::path alt_model;
  // compare
  std::vector<std::filesystem::path> fits;
  std::vector<int> k_values;
  // simulate
  int n = 115;
  std::filesystem::path params;  // truth parameters (JSON) for a non-fixture simulation
  bool quiet = false;
};

// Each command reports to `out`/`err` and returns an ExitCode.
int cmd_fit(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_test(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace lmirt::cli
