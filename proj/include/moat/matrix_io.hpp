#pragma once

// Matrix file formats.
//
// Binary: "MOAT" | u32 version | u64 rows | u64 cols | rows*cols f64, row-major,
// all little-endian. CSV: one header row of column names, one row per subject.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "moat/errors.hpp"

namespace moat::io {

inline constexpr std::array<char, 4> kMagic = {'M', 'O', 'A', 'T'};
inline constexpr std::uint32_t kBinaryVersion = 1;

struct NamedMatrix {
    std::vector<std::string> names;  // one per column
    Eigen::MatrixXd values;
};

namespace detail {

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

template <typename T>
void put(std::ostream& out, T v) {
    v = to_little(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError(path + ": truncated binary matrix");
    return to_little(v);
}

inline std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), res.ptr};
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(delim, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace detail

inline void write_binary(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out.write(kMagic.data(), kMagic.size());
    detail::put<std::uint32_t>(out, kBinaryVersion);
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    detail::put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) detail::put<double>(out, m(r, c));
    if (!out) throw DataError("write failed: " + path.string());
}

inline Eigen::MatrixXd read_binary(const std::filesystem::path& path) {
    const std::string name = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + name);
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw DataError(name + ": missing MOAT magic bytes");
    const auto version = detail::get<std::uint32_t>(in, name);
    if (version != kBinaryVersion) throw DataError(name + ": unsupported binary version " + std::to_string(version));
    const auto rows = detail::get<std::uint64_t>(in, name);
    const auto cols = detail::get<std::uint64_t>(in, name);
    const auto size_on_disk = std::filesystem::file_size(path);
    if (size_on_disk != 24 + rows * cols * sizeof(double)) throw DataError(name + ": size does not match header dimensions");
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = detail::get<double>(in, name);
    return m;
}

inline NamedMatrix read_csv(const std::filesystem::path& path, char delim = ',') {
    const std::string name = path.string();
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + name);
    NamedMatrix out;
    std::string line;
    if (!std::getline(in, line)) throw DataError(name + ": empty file");
    for (auto cell : detail::split(line, delim)) out.names.emplace_back(cell);

    std::vector<double> flat;
    std::size_t rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split(line, delim);
        if (cells.size() != out.names.size()) {
            throw DataError(name + ":" + std::to_string(line_no) + ": expected " + std::to_string(out.names.size()) +
                            " fields, found " + std::to_string(cells.size()));
        }
        for (auto cell : cells) {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (ec != std::errc{} || ptr != cell.data() + cell.size()) {
                throw DataError(name + ":" + std::to_string(line_no) + ": not a number: '" + std::string(cell) + "'");
            }
            flat.push_back(v);
        }
        ++rows;
    }
    out.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        flat.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(out.names.size()));
    return out;
}

inline void write_csv(const std::filesystem::path& path, const NamedMatrix& m, char delim = ',') {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    for (std::size_t c = 0; c < m.names.size(); ++c) out << (c ? std::string(1, delim) : "") << m.names[c];
    out << '\n';
    for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.values.cols(); ++c) out << (c ? std::string(1, delim) : "") << detail::format_double(m.values(r, c));
        out << '\n';
    }
}

/// Reads either format, picked by extension (.csv/.tsv/.txt are text).
inline NamedMatrix read_matrix(const std::filesystem::path& path, const std::string& default_prefix) {
    const auto ext = path.extension().string();
    if (ext == ".csv" || ext == ".txt") return read_csv(path, ',');
    if (ext == ".tsv") return read_csv(path, '\t');
    NamedMatrix out;
    out.values = read_binary(path);
    for (Eigen::Index c = 0; c < out.values.cols(); ++c) out.names.push_back(default_prefix + std::to_string(c + 1));
    return out;
}

inline void require_finite(const Eigen::MatrixXd& m, const std::string& what) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            if (!std::isfinite(m(r, c))) {
                throw DataError(what + ": non-finite value at row " + std::to_string(r + 1) + ", column " + std::to_string(c + 1));
            }
}

}  // namespace moat::io
