#pragma once

#include <string>
#include <vector>

#include "mvladdm/features.hpp"

namespace mvladdm {

// Flat binary tensor files: one ASCII header line "H W C T\n", then
// H*W*C*T little-endian 32-bit floats, frame-major with rows then columns
// and channels innermost. Volumes use C=1, flow fields C=2 (dx, dy),
// descriptor maps any C.

Volume read_volume(const std::string& path);
std::vector<FlowField> read_flows(const std::string& path);
std::vector<DescriptorMap> read_maps(const std::string& path);

void write_volume(const Volume& v, const std::string& path);
void write_flows(const std::vector<FlowField>& flows, const std::string& path);
void write_maps(const std::vector<DescriptorMap>& maps, const std::string& path);

}  // namespace mvladdm
