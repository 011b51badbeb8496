#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace neurodx {

// Throws Error(Io).
std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL);

// Uniform double in [0, 1) from one 64-bit draw; stable across standard libraries.
template <class Engine>
double uniform01(Engine& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Uniform index in [0, n); n > 0.
template <class Engine>
std::size_t uniform_index(Engine& g, std::size_t n) {
  return static_cast<std::size_t>(uniform01(g) * static_cast<double>(n));
}

}  // namespace neurodx
