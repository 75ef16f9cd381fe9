#include <random>

#include <catch_amalgamated.hpp>

#include "bpim2col/verify.hpp"

using namespace bpim2col;
using namespace bpim2col::verify;

TEST_CASE("random geometries are valid and cover strides") {
  std::mt19937_64 rng(1);
  bool seen[5] = {};
  for (int i = 0; i < 500; ++i) {
    const RawGeometry raw = random_geometry(rng);
    REQUIRE_NOTHROW(LayerGeometry::derive(raw));
    CHECK(raw.pad_h < raw.kernel_h);
    CHECK(raw.in_channels <= 8);
    seen[raw.stride] = true;
  }
  CHECK((seen[1] && seen[2] && seen[3] && seen[4]));
}

TEST_CASE("library mapping passes the exhaustive check") {
  const auto m = library_mapping();
  for (const char* s : {"9/2/3/3/2/1", "10/1/2/5/3/2", "7x11/2/2/3x1/2/1x0", "4/1/1/4/4/0"})
    CHECK_FALSE(check_mapping(parse_layer_shorthand(s, 2), m).has_value());
}

TEST_CASE("faults parse") {
  CHECK(parse_fault("none") == Fault::none);
  CHECK(parse_fault("area0-threshold") == Fault::area0_threshold);
  CHECK(parse_fault("dilated-last-row") == Fault::dilated_last_row);
  CHECK_THROWS_AS(parse_fault("bogus"), std::invalid_argument);
}

TEST_CASE("mutants are caught and shrunk to a small counterexample") {
  for (Fault f : {Fault::area0_threshold, Fault::dilated_last_row}) {
    const auto m = mutated_mapping(f);
    const RawGeometry big = parse_layer_shorthand("24/5/6/3/2/1", 3);
    REQUIRE(check_mapping(big, m).has_value());
    const RawGeometry small =
        shrink_counterexample(big, [&](const RawGeometry& r) { return check_mapping(r, m).has_value(); });
    CHECK(check_mapping(small, m).has_value());
    CHECK(small.batch == 1);
    CHECK(small.in_channels == 1);
    CHECK(small.out_channels == 1);
    CHECK(small.in_height <= 3);
  }
}

TEST_CASE("suite reports the first failure minimized") {
  SuiteOptions opts;
  opts.cases = 50;
  opts.mapping = mutated_mapping(Fault::area0_threshold);
  const SuiteResult r = run_suite(opts);
  REQUIRE_FALSE(r.ok());
  CHECK(r.failing_case >= 0);
  CHECK(r.failure->describe().find("transposed") != std::string::npos);
}

TEST_CASE("a short suite passes on the library mapping") {
  SuiteOptions opts;
  opts.cases = 100;
  opts.seed = 9;
  const SuiteResult r = run_suite(opts);
  INFO((r.failure ? r.failure->describe() : std::string()));
  CHECK(r.ok());
  CHECK(r.mapping_cases == 100);
  CHECK(r.backprop_cases == 5);
  CHECK(r.fd_cases == 1);
  CHECK(r.virtual_elements > 0);
}

TEST_CASE("finite differences agree on a padded stride-2 layer") {
  const auto cx = check_finite_differences(parse_layer_shorthand("7/2/2/3/2/1", 1), 3);
  INFO((cx ? cx->describe() : std::string()));
  CHECK_FALSE(cx.has_value());
}
