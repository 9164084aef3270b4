#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hippo::io {

/// Missing, unreadable or corrupt input files.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partially written file. Creates parent directories.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

std::vector<std::uint8_t> gzip_compress(std::span<const std::uint8_t> bytes);
/// Inflates gzip or zlib streams.
std::vector<std::uint8_t> gzip_decompress(std::span<const std::uint8_t> bytes);
bool is_gzip(std::span<const std::uint8_t> bytes);

/// 8-bit grayscale or RGB PNG encoder (filter type 0, zlib-compressed).
std::vector<std::uint8_t> encode_png(std::size_t width, std::size_t height, int channels,
                                     std::span<const std::uint8_t> pixels);
void write_png(const std::filesystem::path& path, std::size_t width, std::size_t height, int channels,
               std::span<const std::uint8_t> pixels);

}  // namespace hippo::io
