#pragma once

// MetaImage (.mhd + .raw, or .mha with inline payload) reader and writer.
//
// Written keys, in order:
//   ObjectType = Image
//   NDims = 3
//   DimSize = nx ny nz
//   ElementSpacing = sx sy sz
//   Offset = ox oy oz
//   ElementNumberOfChannels = c        (only when c > 1)
//   ElementType = MET_FLOAT | MET_USHORT
//   ElementByteOrderMSB = False
//   ElementDataFile = <name>.raw | LOCAL
// The payload is little-endian, x-fastest, channels interleaved per voxel.
// Unknown keys are ignored on read; BinaryDataByteOrderMSB is accepted as an
// alias of ElementByteOrderMSB.

#include <filesystem>
#include <string>
#include <vector>

#include "dentatlas/volgrid.hpp"

namespace dentatlas {

enum class ElementType { kFloat, kUShort };

struct MetaImageHeader {
  GridGeometry geometry;
  int channels = 1;
  ElementType element_type = ElementType::kFloat;
  std::filesystem::path data_file;  ///< empty for LOCAL
};

MetaImageHeader read_metaimage_header(const std::filesystem::path& path);

VolumeGrid read_volume(const std::filesystem::path& path);
LabelGrid read_labels(const std::filesystem::path& path);
void write_volume(const std::filesystem::path& path, const VolumeGrid& v);
void write_labels(const std::filesystem::path& path, const LabelGrid& l);

/// Multi-channel float image; `values` holds channels interleaved per voxel.
std::vector<float> read_float_channels(const std::filesystem::path& path, int channels, GridGeometry& geometry);
void write_float_channels(const std::filesystem::path& path, const GridGeometry& geometry, int channels,
                          const std::vector<float>& values);

}  // namespace dentatlas
