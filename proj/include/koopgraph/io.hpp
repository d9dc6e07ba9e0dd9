#pragma once

#include "koopgraph/kernels.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace koopgraph::io {

// Binary tensor file: magic "KGRF", u32 rows, u32 cols, then rows*cols
// little-endian f64 values in row-major order.
void write_tensor(const std::filesystem::path& path, const Matrix& m);
Matrix read_tensor(const std::filesystem::path& path);

/// Numeric CSV, one matrix row per line. Blank and '#' lines are skipped.
Matrix read_csv_matrix(const std::filesystem::path& path);
void write_csv_matrix(const std::filesystem::path& path, const Matrix& m);

/// One integer per line.
std::vector<int> read_int_column(const std::filesystem::path& path);
void write_int_column(const std::filesystem::path& path, const std::vector<int>& values);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Shortest decimal form that round-trips the double.
std::string format_double(double v);

}  // namespace koopgraph::io
