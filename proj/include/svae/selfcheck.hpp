#pragma once

#include <string>
#include <vector>

namespace svae {

struct SuiteResult {
  std::string name;
  bool passed = false;
  double metric = 0.0;     // worst observed error (suite-specific)
  double tolerance = 0.0;  // pass iff metric < tolerance
  std::string detail;
  double seconds = 0.0;
};

struct SelfCheckOptions {
  // Name of one suite whose implementation-side values are deliberately
  // corrupted; that suite must then fail. Empty for a normal run.
  std::string inject_fault;
  unsigned long long seed = 1;
};

// Suite names in run order.
std::vector<std::string> self_check_suites();

// Each suite compares the library against an independent oracle: dense
// Kronecker products, Monte-Carlo KL, sample moments, the d = 1 reduction,
// conv/transposed-conv adjointness, nested-loop convolution, finite-difference
// gradients of the ELBO, and direct-summation Parzen densities.
// Throws ContractError for an unknown inject_fault name.
std::vector<SuiteResult> run_self_check(const SelfCheckOptions& options = {});

// Fixed-width table, one line per suite.
std::string format_suite_table(const std::vector<SuiteResult>& results);

}  // namespace svae
