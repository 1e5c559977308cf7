#include "ecohmpc/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "ecohmpc/error.hpp"

namespace ecohmpc {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::vector<std::string>> split_cells(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(t);
    while (std::getline(ls, cell, ',')) cells.push_back(trim(cell));
    if (!t.empty() && t.back() == ',') cells.emplace_back();
    out.push_back(std::move(cells));
  }
  return out;
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

double parse_double(const std::string& cell, const std::string& origin) {
  if (cell.empty()) throw DataError(origin + ": empty numeric cell");
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size()) {
    throw DataError(origin + ": not a number: '" + cell + "'");
  }
  return v;
}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError("missing CSV column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

std::vector<double> CsvTable::column_values(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[c]);
  return out;
}

CsvTable parse_csv(const std::string& text, const std::string& origin) {
  auto cells = split_cells(text);
  if (cells.empty()) throw DataError(origin + ": empty CSV");
  CsvTable table;
  table.header = cells.front();
  for (std::size_t i = 1; i < cells.size(); ++i) {
    if (cells[i].size() != table.header.size()) {
      throw DataError(origin + ": row " + std::to_string(i) + " has " +
                      std::to_string(cells[i].size()) + " cells, header has " +
                      std::to_string(table.header.size()));
    }
    std::vector<double> row;
    row.reserve(cells[i].size());
    for (const auto& c : cells[i]) row.push_back(parse_double(c, origin));
    table.rows.push_back(std::move(row));
  }
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  return parse_csv(read_text_file(path), path.string());
}

std::vector<std::vector<std::string>> read_csv_cells(const std::filesystem::path& path) {
  return split_cells(read_text_file(path));
}

}  // namespace ecohmpc
