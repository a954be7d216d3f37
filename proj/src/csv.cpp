#include "shrinkhs/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace shrinkhs::io {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

CsvTable read_csv(const std::filesystem::path& path, bool allow_ragged) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (!have_header) {
      for (auto& c : cells) table.header.push_back(trim(c));
      have_header = true;
      continue;
    }
    if (!allow_ragged && cells.size() != table.header.size()) {
      std::ostringstream msg;
      msg << path.string() << ": line " << line_no << " has " << cells.size()
          << " cells, header has " << table.header.size();
      throw IoError(msg.str());
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = trim(cells[c]);
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() ||
          !std::isfinite(value)) {
        std::ostringstream msg;
        msg << path.string() << ": line " << line_no << ", column " << c + 1
            << ": not a finite number ('" << cell << "')";
        throw IoError(msg.str());
      }
      row.push_back(value);
    }
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw IoError(path.string() + ": empty file (a header row is required)");
  return table;
}

Matrix to_matrix(const CsvTable& table) {
  const auto rows = static_cast<Eigen::Index>(table.rows.size());
  const auto cols = static_cast<Eigen::Index>(table.header.size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (static_cast<Eigen::Index>(table.rows[r].size()) != cols)
      throw IoError("to_matrix: ragged table");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = table.rows[r][c];
  }
  return m;
}

std::string format_double(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (std::isnan(value)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : path_(path), out_(path), width_(header.size()) {
  if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != width_) throw std::logic_error("CsvWriter: row width differs from header");
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (c) out_ << ',';
    out_ << cells[c];
  }
  out_ << '\n';
  if (!out_) throw IoError("write to '" + path_.string() + "' failed");
}

void CsvWriter::close() {
  out_.close();
  if (out_.fail()) throw IoError("closing '" + path_.string() + "' failed");
}

}  // namespace shrinkhs::io
