#include <doctest.h>

TEST_CASE("placeholder_bismut") { CHECK(true); }
