#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ecohmpc {

/// Numeric CSV table with a header row. Whitespace around cells is ignored,
/// lines starting with '#' are comments.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of a header column; throws DataError if absent.
  std::size_t column(const std::string& name) const;
  std::vector<double> column_values(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// Parses CSV text; `origin` is used in error messages.
CsvTable parse_csv(const std::string& text, const std::string& origin);

/// Raw cells, no header handling. Used by the engine map reader whose first
/// row and column are grids.
std::vector<std::vector<std::string>> read_csv_cells(const std::filesystem::path& path);

double parse_double(const std::string& cell, const std::string& origin);

/// Shortest representation that round-trips through strtod.
std::string format_double(double value);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace ecohmpc
