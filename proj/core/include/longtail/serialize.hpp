#pragma once

#include <cstdint>
#include <string>

#include "longtail/csl.hpp"
#include "longtail/fsl.hpp"

namespace longtail {

// Flat text model format, bit-exact round trip. Weights are rows
// `layer_index,row,col,value`; a col of -1 marks the bias entry for `row`.
// The header carries layer sizes, class priors (CSL), registry hash, and
// for FSL models a method tag plus the hyperparameter block.

void save_csl_model(const CslModel& model, const std::string& path,
                    std::uint64_t config_hash = 0);
CslModel load_csl_model(const std::string& path, const ClassRegistry& registry);

void save_meta_model(const MetaModel& model, std::uint64_t registry_hash,
                     const std::string& path, std::uint64_t config_hash = 0);
MetaModel load_meta_model(const std::string& path, std::uint64_t expected_registry_hash);

// Reads only the `config_hash` header field; 0 when absent or unreadable.
std::uint64_t read_model_config_hash(const std::string& path);

// Shortest decimal text that parses back to exactly the same double.
std::string format_double_exact(double v);

}  // namespace longtail
