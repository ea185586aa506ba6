///
/// \file io.hpp
///
/// Matrix serialization: CSV (one row per line) and a little-endian binary
/// form `u64 rows, u64 cols, rows*cols float64` in row-major order.
///
#pragma once

#include "core.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace lrpr::io
{

inline void write_csv(std::ostream& os, const Matrix& m)
{
    const auto old = os.precision(std::numeric_limits<double>::max_digits10);
    for (Index i = 0; i < m.rows(); ++i)
    {
        for (Index j = 0; j < m.cols(); ++j)
        {
            if (j)
            {
                os << ',';
            }
            os << m(i, j);
        }
        os << '\n';
    }
    os.precision(old);
}

inline Matrix read_csv(std::istream& is)
{
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line))
    {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
        {
            line.pop_back();
        }
        if (line.empty())
        {
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
        {
            double v = 0.0;
            const char* b = cell.data();
            const char* e = cell.data() + cell.size();
            while (b < e && *b == ' ')
            {
                ++b;
            }
            auto [ptr, ec] = std::from_chars(b, e, v);
            if (ec != std::errc() || !std::isfinite(v))
            {
                throw Error("read_csv: bad value on line " + std::to_string(lineno));
            }
            row.push_back(v);
        }
        if (!rows.empty() && row.size() != rows.front().size())
        {
            throw DimensionMismatch("read_csv: ragged row on line " + std::to_string(lineno));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty())
    {
        return Matrix();
    }
    Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < out.rows(); ++i)
    {
        for (Index j = 0; j < out.cols(); ++j)
        {
            out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    return out;
}

namespace detail
{
template <typename T>
T to_little(T v) noexcept
{
    if constexpr (std::endian::native == std::endian::big)
    {
        unsigned char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i)
        {
            std::swap(buf[i], buf[sizeof(T) - 1 - i]);
        }
        std::memcpy(&v, buf, sizeof(T));
    }
    return v;
}

template <typename T>
void put(std::ostream& os, T v)
{
    v = to_little(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is)
{
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    {
        throw Error("read_binary: truncated stream");
    }
    return to_little(v);
}
}  // namespace detail

inline void write_binary(std::ostream& os, const Matrix& m)
{
    detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
    detail::put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i)
    {
        for (Index j = 0; j < m.cols(); ++j)
        {
            detail::put<double>(os, m(i, j));
        }
    }
}

inline Matrix read_binary(std::istream& is)
{
    const auto rows = detail::get<std::uint64_t>(is);
    const auto cols = detail::get<std::uint64_t>(is);
    constexpr std::uint64_t kMax = std::uint64_t{1} << 32;
    if (rows >= kMax || cols >= kMax)
    {
        throw Error("read_binary: implausible dimensions");
    }
    Matrix out(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index i = 0; i < out.rows(); ++i)
    {
        for (Index j = 0; j < out.cols(); ++j)
        {
            out(i, j) = detail::get<double>(is);
        }
    }
    require_finite(out, "read_binary");
    return out;
}

inline void save_csv(const std::string& path, const Matrix& m)
{
    std::ofstream os(path);
    if (!os)
    {
        throw Error("cannot open " + path);
    }
    write_csv(os, m);
}

inline void save_binary(const std::string& path, const Matrix& m)
{
    std::ofstream os(path, std::ios::binary);
    if (!os)
    {
        throw Error("cannot open " + path);
    }
    write_binary(os, m);
}

}  // namespace lrpr::io
