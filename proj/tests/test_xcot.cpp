#include <catch2/catch_amalgamated.hpp>
#include "ccl/experiment.hpp"
TEST_CASE("placeholder test_xcot") { CHECK(true); }
