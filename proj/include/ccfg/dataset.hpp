#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ccfg/grid.hpp"

namespace ccfg {

/// A set of timestamps sharing one variable table, shape and statistics.
struct Dataset {
  /// Manifest order; targets and inputs interleaved as written.
  std::vector<VariableSpec> variables;
  int hr_height = 0;
  int hr_width = 0;
  int scale_factor = 8;
  StandardizationStats stats;
  std::vector<SamplePair> pairs;

  static Dataset from_pairs(std::vector<SamplePair> pairs);
  void validate() const;
};

/// Writes `<dir>/manifest.json` and `<dir>/payload.bin`; returns the manifest path.
/// Grids are stored as float32, so values must be float-representable for a
/// bit-exact round trip (the synthetic generator guarantees this).
std::filesystem::path write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Reads a dataset from its manifest. Variables come back in manifest order.
/// Throws FormatError naming the failing record for corrupt or truncated payloads.
Dataset read_dataset(const std::filesystem::path& manifest_path,
                     const std::vector<std::string>& required_variables = {});

}  // namespace ccfg
