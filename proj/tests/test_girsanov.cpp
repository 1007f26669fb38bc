#include <doctest.h>

TEST_CASE("placeholder_girsanov") { CHECK(true); }
