#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dmaps/error.hpp"

namespace dmaps {

/// Shortest decimal form that reads back to the identical double.
inline std::string format_double(double value) {
  char buffer[64];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

inline std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

/// Locale-independent parse; the whole (trimmed) field must be consumed.
inline std::optional<double> parse_double(std::string_view text) {
  text = trim(text);
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc() || result.ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char separator = ',') {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(separator, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

struct CsvTable {
  std::vector<std::string> header;  // empty when the file has no header row
  Eigen::MatrixXd values;
};

/// Reads a rectangular numeric table. The first row is taken as a header
/// when any of its fields fails to parse as a number. Rows and columns in
/// error messages are 1-based and count the header line.
inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");

  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw DataError("'" + path.string() + "': empty file");

  CsvTable table;
  std::size_t first_data = 0;
  {
    const auto fields = split_fields(lines.front());
    bool numeric = true;
    for (auto field : fields) numeric = numeric && parse_double(field).has_value();
    if (!numeric) {
      for (auto field : fields) table.header.emplace_back(trim(field));
      first_data = 1;
    }
  }

  const std::size_t columns =
      table.header.empty() ? split_fields(lines.front()).size() : table.header.size();
  const std::size_t rows = lines.size() - first_data;
  table.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(columns));

  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t line_no = first_data + r + 1;
    const auto fields = split_fields(lines[first_data + r]);
    if (fields.size() != columns) {
      std::ostringstream msg;
      msg << "'" << path.string() << "' row " << line_no << ": expected " << columns
          << " fields, found " << fields.size();
      throw DataError(msg.str());
    }
    for (std::size_t c = 0; c < columns; ++c) {
      const auto value = parse_double(fields[c]);
      if (!value || !std::isfinite(*value)) {
        std::ostringstream msg;
        msg << "'" << path.string() << "' row " << line_no << ", column " << c + 1
            << ": not a finite number: '" << trim(fields[c]) << "'";
        throw DataError(msg.str());
      }
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *value;
    }
  }
  return table;
}

inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const Eigen::MatrixXd& values) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  if (!header.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
  }
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      out << (c ? "," : "") << format_double(values(r, c));
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

}  // namespace dmaps
