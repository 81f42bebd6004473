#include <doctest.h>

#include "support/oracles.hpp"

using namespace dcfae::testing;

TEST_CASE("closed-form values") {
  for (const auto& c : closed_form_checks()) {
    CAPTURE(c.name);
    CHECK(std::abs(c.actual - c.expected) <= 1e-6);
    // The quoted four-decimal figures must agree with the recomputation.
    if (c.quoted) CHECK(std::abs(c.expected - *c.quoted) <= 5e-5);
  }
}
