#include <kgdl/kgdl.hpp>

#include <catch_amalgamated.hpp>

using namespace kgdl;

TEST_CASE("canonicalize lowercases and joins on underscores", "[text]") {
  CHECK(canonicalize("783 Arcadia Pl") == "783_arcadia_pl");
  CHECK(canonicalize("P.F. Changs") == "p.f._changs");
  CHECK(canonicalize("  The   Westin  ") == "the_westin");
  CHECK(canonicalize("sunny") == "sunny");
}

TEST_CASE("canonicalize is idempotent", "[text]") {
  for (const std::string s : {"783 Arcadia Pl", "Clear Skies", "low of 20F", "a  b\tc"}) {
    const std::string once = canonicalize(s);
    CHECK(canonicalize(once) == once);
  }
}

TEST_CASE("canonicalize rejects blank values", "[text]") {
  CHECK_THROWS_AS(canonicalize(""), ValidationError);
  CHECK_THROWS_AS(canonicalize("   \t "), ValidationError);
}

TEST_CASE("split_compound_entity maps parts onto attributes in order", "[text]") {
  const auto parts = split_compound_entity("clear skies, low of 20F, high of 30F",
                                           {"condition", "low", "high"});
  REQUIRE(parts.size() == 3);
  CHECK(parts[0] == std::pair<std::string, std::string>{"condition", "clear_skies"});
  CHECK(parts[1] == std::pair<std::string, std::string>{"low", "low_of_20f"});
  CHECK(parts[2] == std::pair<std::string, std::string>{"high", "high_of_30f"});
}

TEST_CASE("split_compound_entity keeps simple values whole", "[text]") {
  const auto parts = split_compound_entity("5 miles", {"distance"});
  REQUIRE(parts.size() == 1);
  CHECK(parts[0].second == "5_miles");
}

TEST_CASE("split_compound_entity validates attribute count", "[text]") {
  CHECK_THROWS_AS(split_compound_entity("a, b, c", {"only", "two"}), ValidationError);
  CHECK_THROWS_AS(split_compound_entity("x", {}), ValidationError);
}

TEST_CASE("tokenize splits off boundary punctuation only", "[text]") {
  CHECK(tokenize("Where is the nearest gas station?") ==
        std::vector<std::string>{"where", "is", "the", "nearest", "gas", "station", "?"});
  CHECK(tokenize("chevron is 5_miles away at 783_arcadia_pl.") ==
        std::vector<std::string>{"chevron", "is", "5_miles", "away", "at", "783_arcadia_pl",
                                 "."});
  CHECK(tokenize("p.f._changs, please!") ==
        std::vector<std::string>{"p.f._changs", ",", "please", "!"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("   ") .empty());
}

TEST_CASE("tokenize lowercases", "[text]") {
  CHECK(tokenize("OK Sure") == std::vector<std::string>{"ok", "sure"});
}
