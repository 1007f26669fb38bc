#include <doctest.h>

TEST_CASE("placeholder_brownian") { CHECK(true); }
