#include <doctest.h>

TEST_CASE("placeholder_flow") { CHECK(true); }
