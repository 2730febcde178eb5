#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace protoncast {

// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

void append_le_doubles(std::string& out, std::span<const double> values);
// Decodes `count` doubles starting at byte `offset`.
std::vector<double> read_le_doubles(std::string_view bytes, std::size_t offset, std::size_t count);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace protoncast
