#include <gtest/gtest.h>

#include <set>
#include <string>

#include "eivlg/gradcheck.hpp"

namespace eivlg {
namespace {

TEST(GradSuite, EveryGradientPassesOverTenSeeds) {
  GradSuiteOptions opt;
  opt.seeds = 10;
  const GradSuiteReport r = RunGradSuite(opt);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  EXPECT_LT(r.max_tiny_abs_error, 1e-9);

  std::set<std::string> names, seeds_per_name;
  for (const auto& e : r.entries) {
    names.insert(e.name);
    seeds_per_name.insert(e.name + "#" + std::to_string(e.seed));
    EXPECT_GT(e.result.checked, 0u) << e.name;
  }
  for (const char* required :
       {"mll", "bce", "span", "qgh", "focal", "diou", "infuser_concat", "infuser_add", "infuser_ca",
        "e2e_span_qgh_concat", "e2e_focal_diou_concat"}) {
    EXPECT_TRUE(names.count(required)) << required;
  }
  EXPECT_EQ(seeds_per_name.size(), names.size() * 10);
}

TEST(GradSuite, InjectedSignErrorIsCaught) {
  GradSuiteOptions opt;
  opt.seeds = 1;
  opt.inject_fault = true;
  EXPECT_GT(RunGradSuite(opt).max_rel_error, 0.5);
}

}  // namespace
}  // namespace eivlg
