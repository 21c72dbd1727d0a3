#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fatlens {

std::string read_file(const std::filesystem::path& path);

// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Hex SHA-256 of bytes / of a file's contents.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Minimal RFC 4180 reader: quoted fields may hold commas, quotes and newlines.
// `start_lines`, when given, receives the 1-based line on which each row begins.
std::vector<std::vector<std::string>> parse_csv(std::string_view text, char delimiter = ',',
                                               std::vector<std::size_t>* start_lines = nullptr);

std::string csv_escape(std::string_view field);

// Accumulates rows and serializes with a mandatory header.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add_row(std::vector<std::string> row);
  std::string str() const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Shortest round-trip text for a double ("nan"/"inf" spelled out).
std::string format_double(double v);
std::string format_fixed(double v, int decimals);

}  // namespace fatlens
