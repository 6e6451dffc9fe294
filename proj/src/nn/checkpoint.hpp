#pragma once

#include <string>

#include "nn/optim.hpp"

namespace canav::nn {

// Binary checkpoint: format version, named parameter arrays with shapes,
// optional optimizer state, and a free-form metadata JSON blob. Raw IEEE
// bytes, so save/load round-trips are bit-exact.
void save_checkpoint(const std::string& path, const ParamStore& params,
                     const AdamState* adam, const std::string& metadata_json);

// Loads values into an existing store; names, order and shapes must match.
// Returns the metadata blob. `adam` may be null to skip optimizer state.
std::string load_checkpoint(const std::string& path, const ParamStore& params,
                            AdamState* adam);

// Reads only the metadata blob.
std::string read_checkpoint_metadata(const std::string& path);

}  // namespace canav::nn
