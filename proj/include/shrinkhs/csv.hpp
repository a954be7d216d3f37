#pragma once

#include "shrinkhs/model.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace shrinkhs::io {

/// Unreadable or malformed input, or an unwritable output.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Comma-separated numbers below a header row. Blank lines are skipped.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Parses a CSV file. Every cell must be a number (inf/nan are rejected);
/// errors name the file, 1-based line and column. Unless allow_ragged, each
/// row must have as many cells as the header.
CsvTable read_csv(const std::filesystem::path& path, bool allow_ragged = false);

/// Rows of a rectangular table as a matrix.
Matrix to_matrix(const CsvTable& table);

/// "%.17g" rendering (round-trips exactly); infinities print as inf / -inf.
std::string format_double(double value);

/// Line-oriented CSV output that reports write failures as IoError.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t width_;
};

}  // namespace shrinkhs::io
