#include <random>

#include "doctest.h"

#include "anogan/ops.hpp"
#include "anogan/tape.hpp"
#include "grad_suite.hpp"
#include "oracles.hpp"

using namespace anogan;

TEST_CASE("every layer matches finite differences") {
  for (const auto& check : testing::layer_gradient_checks(11)) {
    INFO(check.name << " relative error " << check.relative_error);
    CHECK(check.relative_error < 1e-3);
  }
}
