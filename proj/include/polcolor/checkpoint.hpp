#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "polcolor/pipeline.hpp"

namespace polcolor {

/// "PCKP" file: magic, u16 format version, u16 section count, then sections of
/// a 4-byte tag, u64 payload length and payload. Sections: CONF (key=value
/// text), PARM (layer arrays), ADAM (optimizer state), QUNT (quantizer tables)
/// and NORM (feature statistics). All numbers are little-endian; arrays are
/// float64 in column-major order behind u32 shape headers.
std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& checkpoint);
ModelCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace polcolor
