#include <doctest.h>

TEST_CASE("placeholder_experiments") { CHECK(true); }
