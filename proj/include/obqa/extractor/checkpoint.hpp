#pragma once

#include <filesystem>
#include <iosfwd>

#include "obqa/extractor/params.hpp"

namespace obqa {

// Versioned binary: magic, format version, EncoderConfig, parameter count,
// then every parameter as a little-endian IEEE-754 double.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ModelParams<double>& params);
ModelParams<double> read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ModelParams<double>& params);
ModelParams<double> load_checkpoint(const std::filesystem::path& path);

}  // namespace obqa
