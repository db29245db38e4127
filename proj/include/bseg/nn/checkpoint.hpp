#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "bseg/nn/vnet.hpp"

namespace bseg::nn {

/// Binary checkpoint: magic, length-prefixed JSON header (model config and
/// tensor table), then raw little-endian float32 payload.
void save_checkpoint(const std::string& path, VNet& net,
                     const nlohmann::ordered_json& extra = nlohmann::ordered_json::object());

/// Rebuilds the model from the stored config and restores every parameter
/// and buffer bitwise. Optionally returns the "extra" header block.
std::unique_ptr<VNet> load_checkpoint(const std::string& path,
                                      nlohmann::json* extra_out = nullptr);

}  // namespace bseg::nn
