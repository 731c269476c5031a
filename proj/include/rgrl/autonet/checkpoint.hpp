#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "rgrl/autonet/tape.hpp"

namespace rgrl::autonet {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes <dir>/params.bin (float64 little-endian, row-major, parameters in
/// list order) and <dir>/manifest.json (name, shape, offset, dtype).
void save_checkpoint(const std::filesystem::path& dir, const std::vector<Parameter*>& params);

/// Loads into `params`; names and shapes must match the manifest exactly.
void load_checkpoint(const std::filesystem::path& dir, const std::vector<Parameter*>& params);

}  // namespace rgrl::autonet
