#include <catch2/catch_amalgamated.hpp>
#include "helpers.hpp"
TEST_CASE("placeholder test_projection") { CHECK(true); }
