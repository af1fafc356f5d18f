#include "ccm/selftest.hpp"

#include "doctest.h"

TEST_CASE("built-in oracle suites pass")
{
    for (const auto& c : ccm::selftest::run_all()) {
        CAPTURE(c.name);
        CAPTURE(c.detail);
        CHECK(c.passed);
    }
}
