#pragma once

#include <map>
#include <string>
#include <vector>

#include "pertrl/diff/param_vector.hpp"

namespace pertrl::nets {

// Binary checkpoint: layout header (names, shapes, offsets) followed by the
// flat 64-bit little-endian parameter array per section. Round-trips exactly.
struct Checkpoint {
    std::map<std::string, std::string> meta;  // architecture / env description
    std::vector<std::pair<std::string, diff::ParamVector>> sections;

    const diff::ParamVector& section(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pertrl::nets
