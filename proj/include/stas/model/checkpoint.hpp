#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "stas/model/stas_model.hpp"

// Checkpoint layout:
//   8 bytes   magic "STASCKP1"
//   8 bytes   metadata length, unsigned little-endian
//   metadata  UTF-8 JSON: model config plus the tensor manifest
//             (name, shape, byte offset into the payload), sorted by name
//   payload   little-endian IEEE-754 doubles in manifest order
namespace stas::model {

void save_checkpoint(std::ostream& out, const StasModel& model);
void save_checkpoint(const std::filesystem::path& path, const StasModel& model);

StasModel load_checkpoint(std::istream& in, const std::string& source = "<stream>");
StasModel load_checkpoint(const std::filesystem::path& path);

}  // namespace stas::model
