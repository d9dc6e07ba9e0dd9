#include "koopgraph/io.hpp"

#include "koopgraph/error.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace koopgraph::io {

static_assert(std::endian::native == std::endian::little,
              "tensor files are written in host order; add byte swapping for big-endian hosts");

namespace {

constexpr std::array<char, 4> kMagic{'K', 'G', 'R', 'F'};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& tok, const std::filesystem::path& path, std::size_t line) {
    const std::string t = trim(tok);
    double v = 0.0;
    const auto* first = t.data();
    const auto* last = t.data() + t.size();
    const auto res = std::from_chars(first, last, v);
    if (t.empty() || res.ec != std::errc{} || res.ptr != last) {
        throw ConfigError(path.string() + ":" + std::to_string(line) + ": cannot parse number '" +
                          t + "'");
    }
    if (!std::isfinite(v)) {
        throw ConfigError(path.string() + ":" + std::to_string(line) + ": non-finite value");
    }
    return v;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) {
        throw ConfigError("cannot open file: " + path.string());
    }
    return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode | std::ios::trunc);
    if (!out) {
        throw ConfigError("cannot write file: " + path.string());
    }
    return out;
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Matrix& m) {
    if (m.rows() > std::numeric_limits<std::uint32_t>::max() ||
        m.cols() > std::numeric_limits<std::uint32_t>::max()) {
        throw ContractError("write_tensor: matrix too large for u32 header");
    }
    auto out = open_out(path, std::ios::binary);
    out.write(kMagic.data(), kMagic.size());
    const auto rows = static_cast<std::uint32_t>(m.rows());
    const auto cols = static_cast<std::uint32_t>(m.cols());
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    out.write(reinterpret_cast<const char*>(rm.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rm.size())));
    if (!out) {
        throw ConfigError("write failed: " + path.string());
    }
}

Matrix read_tensor(const std::filesystem::path& path) {
    auto in = open_in(path, std::ios::binary);
    std::array<char, 4> magic{};
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
    in.read(magic.data(), magic.size());
    in.read(reinterpret_cast<char*>(&rows), sizeof rows);
    in.read(reinterpret_cast<char*>(&cols), sizeof cols);
    if (!in || magic != kMagic) {
        throw ConfigError("not a KGRF tensor file: " + path.string());
    }
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
    in.read(reinterpret_cast<char*>(rm.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rm.size())));
    if (!in) {
        throw ConfigError("truncated tensor file: " + path.string());
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw ConfigError("trailing bytes in tensor file: " + path.string());
    }
    return rm;
}

Matrix read_csv_matrix(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::vector<double> row;
        std::stringstream ss(t);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            row.push_back(parse_double(tok, path, lineno));
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(rows.front().size()) + " columns, found " +
                              std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw ConfigError("empty matrix file: " + path.string());
    }
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

void write_csv_matrix(const std::filesystem::path& path, const Matrix& m) {
    auto out = open_out(path);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

std::vector<int> read_int_column(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::vector<int> values;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        int v = 0;
        const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
        if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": cannot parse integer '" + t + "'");
        }
        values.push_back(v);
    }
    return values;
}

void write_int_column(const std::filesystem::path& path, const std::vector<int>& values) {
    auto out = open_out(path);
    for (const int v : values) out << v << '\n';
}

std::string read_text(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
}

std::string format_double(double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

}  // namespace koopgraph::io
