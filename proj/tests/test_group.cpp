#include <doctest.h>

TEST_CASE("placeholder_group") { CHECK(true); }
