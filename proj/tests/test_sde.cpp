#include <doctest.h>

TEST_CASE("placeholder_sde") { CHECK(true); }
