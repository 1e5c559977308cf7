#include "ecohmpc/config.hpp"

#include <sstream>

#include "ecohmpc/csv.hpp"
#include "ecohmpc/error.hpp"

namespace ecohmpc {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

bool is_quoted(const std::string& v) { return v.size() >= 2 && v.front() == '"' && v.back() == '"'; }

}  // namespace

Config Config::load(const std::filesystem::path& path) {
  Config cfg;
  cfg.parse_into(read_text_file(path), path.parent_path(), path.string(), 0);
  cfg.sources_.insert(cfg.sources_.begin(), path);
  return cfg;
}

Config Config::parse(const std::string& text, const std::filesystem::path& base_dir,
                     const std::string& origin) {
  Config cfg;
  cfg.parse_into(text, base_dir, origin, 0);
  return cfg;
}

void Config::parse_into(const std::string& text, const std::filesystem::path& base_dir,
                        const std::string& origin, int depth) {
  if (depth > 8) throw DataError(origin + ": include nesting too deep");
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(strip_comment(line));
    if (t.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (t.front() == '[') {
      if (t.back() != ']') throw DataError(where + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw DataError(where + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty() || value.empty()) throw DataError(where + ": empty key or value");
    if (section.empty() && key == "include") {
      if (!is_quoted(value)) throw DataError(where + ": include expects a quoted path");
      const auto inc = base_dir / value.substr(1, value.size() - 2);
      parse_into(read_text_file(inc), inc.parent_path(), inc.string(), depth + 1);
      sources_.push_back(inc);
      continue;
    }
    const std::string full = section.empty() ? key : section + "." + key;
    values_[full] = Entry{value, base_dir, where};
  }
}

bool Config::has(const std::string& key) const { return values_.count(key) != 0; }

const Config::Entry& Config::entry(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw DataError("missing configuration key '" + key + "'");
  return it->second;
}

double Config::number(const std::string& key) const {
  const auto& e = entry(key);
  return parse_double(e.raw, e.origin + " (" + key + ")");
}

double Config::number_or(const std::string& key, double fallback) const {
  return has(key) ? number(key) : fallback;
}

int Config::integer(const std::string& key) const {
  const double v = number(key);
  if (v != static_cast<double>(static_cast<long long>(v))) {
    throw DataError(entry(key).origin + ": '" + key + "' must be an integer");
  }
  return static_cast<int>(v);
}

int Config::integer_or(const std::string& key, int fallback) const {
  return has(key) ? integer(key) : fallback;
}

bool Config::boolean_or(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const auto& e = entry(key);
  if (e.raw == "true") return true;
  if (e.raw == "false") return false;
  throw DataError(e.origin + ": '" + key + "' must be true or false");
}

std::string Config::string(const std::string& key) const {
  const auto& e = entry(key);
  if (!is_quoted(e.raw)) throw DataError(e.origin + ": '" + key + "' must be a quoted string");
  return e.raw.substr(1, e.raw.size() - 2);
}

std::string Config::string_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? string(key) : fallback;
}

std::vector<double> Config::numbers(const std::string& key) const {
  const auto& e = entry(key);
  if (e.raw.size() < 2 || e.raw.front() != '[' || e.raw.back() != ']') {
    throw DataError(e.origin + ": '" + key + "' must be a list [a, b, ...]");
  }
  std::vector<double> out;
  std::istringstream in(e.raw.substr(1, e.raw.size() - 2));
  std::string cell;
  while (std::getline(in, cell, ',')) {
    cell = trim(cell);
    if (cell.empty()) continue;
    out.push_back(parse_double(cell, e.origin + " (" + key + ")"));
  }
  return out;
}

std::filesystem::path Config::path(const std::string& key) const {
  const auto& e = entry(key);
  return e.base_dir / string(key);
}

void Config::set(const std::string& key, const std::string& raw_value) {
  values_[key] = Entry{raw_value, std::filesystem::current_path(), "<override>"};
}

std::vector<std::string> Config::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : values_) out.push_back(k);
  return out;
}

}  // namespace ecohmpc
