#pragma once

// Randomized verification of the implicit mapping and the simulated
// backpropagation against the explicit reference implementations.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>

#include "bpim2col/bp_im2col.hpp"
#include "bpim2col/geometry.hpp"

namespace bpim2col::verify {

using Mapper = std::function<AddressMapResult(Index row, Index col, const LayerGeometry&)>;

// The mapping functions under test. Defaults to the library implementation;
// tests and the CLI substitute mutants to check that failures are caught.
struct MappingUnderTest {
  Mapper transposed;
  Mapper dilated;
  bool check_gather = true;  // also compare the burst gather path
};

MappingUnderTest library_mapping();

enum class Fault {
  none,
  area0_threshold,  // top/left padding predicate off by one
  dilated_last_row, // last inserted loss row reported as zero
};

Fault parse_fault(const std::string& text);  // throws std::invalid_argument
MappingUnderTest mutated_mapping(Fault fault);

// Random geometry: extents 1..max_extent, S 1..4, K 1..7, P 0..K-1,
// B 1..3, C and N 1..max_channels.
RawGeometry random_geometry(std::mt19937_64& rng, Index max_extent = 32, Index max_channels = 8);

struct Counterexample {
  RawGeometry raw;
  std::string mode;  // "transposed", "dilated", "loss", "gradient", ...
  Index row = 0;
  Index col = 0;
  std::string expected;
  std::string actual;

  std::string describe() const;
};

// Every virtual element of both modes against the materialized operand.
// Source values are flat index + 1, so a value match pins the address.
std::optional<Counterexample> check_mapping(const RawGeometry& raw, const MappingUnderTest& m);

// Loss and gradient GEMMs on the simulated array against the reference
// convolutions, plus agreement of the two gradient formulations.
std::optional<Counterexample> check_backprop(const RawGeometry& raw, std::uint64_t seed);

// Central differences of L = sum(out^2)/2 against simulated gradients.
// Passes when |fd - analytic| <= rel_tol * max(1, |analytic|).
std::optional<Counterexample> check_finite_differences(const RawGeometry& raw, std::uint64_t seed,
                                                       double rel_tol = 1e-3, int samples = 8);

// Greedily lowers each geometry field while `fails` keeps returning true.
RawGeometry shrink_counterexample(const RawGeometry& raw,
                                  const std::function<bool(const RawGeometry&)>& fails);

struct SuiteOptions {
  std::uint64_t seed = 42;
  int cases = 1000;
  MappingUnderTest mapping = library_mapping();
  int backprop_every = 20;  // one backprop case per this many mapping cases
  int fd_every = 100;
};

struct SuiteResult {
  int mapping_cases = 0;
  Index virtual_elements = 0;
  int backprop_cases = 0;
  int fd_cases = 0;
  std::optional<Counterexample> failure;  // minimized
  int failing_case = -1;

  bool ok() const { return !failure.has_value(); }
};

SuiteResult run_suite(const SuiteOptions& opts);

}  // namespace bpim2col::verify
