#pragma once

// Ice-core records and the accumulation series derived from them.
//
// A core is a table of (depth, age, temperature anomaly) rows. Adjacent rows
// define a slice whose apparent accumulation rate (AAR) is the depth increment
// over the age increment, located at the mid-age and carrying the mid
// temperature. The model works on log-AAR.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icecore/errors.hpp"

namespace icecore {

struct RawCoreSeries {
    std::vector<double> depth; ///< m, strictly increasing
    std::vector<double> age;   ///< KYrBP, strictly increasing
    std::vector<double> temp;  ///< degC anomaly

    std::size_t size() const noexcept { return depth.size(); }
};

struct DerivedSeries {
    std::vector<double> z; ///< mid-age of each slice, KYrBP
    std::vector<double> x; ///< mid temperature anomaly, degC
    std::vector<double> b; ///< AAR, m/KYr
    std::vector<double> y; ///< log(b)

    std::size_t size() const noexcept { return z.size(); }
};

/// Temperature band (-x_m, x_M) that all x must lie strictly inside. It fixes
/// the admissible interval [-1/x_M, 1/x_m] for the temperature coefficient so
/// that 1 + gamma*x > 0 throughout.
struct TempBand {
    double x_m = 1.0;
    double x_M = 1.0;

    double gamma_lo() const noexcept { return -1.0 / x_M; }
    double gamma_hi() const noexcept { return 1.0 / x_m; }

    bool contains(double x) const noexcept { return x > -x_m && x < x_M; }
    bool admits(double gamma) const noexcept { return gamma >= gamma_lo() && gamma <= gamma_hi(); }
    double clamp(double gamma) const noexcept { return std::clamp(gamma, gamma_lo(), gamma_hi()); }
};

/// Table layout for `load_core`. A zero delimiter means auto-detect from the
/// header line (tab if present, comma otherwise).
struct CsvFormat {
    char delimiter = 0;
    char comment = '#';
    std::size_t min_rows = 3;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    constexpr std::string_view ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delim, start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline bool parse_double(std::string_view s, double& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

} // namespace detail

/// Reads a delimited table with header columns depth_m, age_kyrbp and temp_c
/// (any order, extra columns ignored). Blank lines and comment lines are
/// skipped. Errors carry the 1-based data row.
inline RawCoreSeries load_core(std::istream& in, const CsvFormat& fmt = {}) {
    static constexpr std::array<std::string_view, 3> kColumns{"depth_m", "age_kyrbp", "temp_c"};

    RawCoreSeries out;
    std::array<std::size_t, 3> col{};
    char delim = fmt.delimiter;
    bool have_header = false;
    std::size_t ncols = 0;
    std::size_t row = 0;

    std::string raw;
    bool first_line = true;
    while (std::getline(in, raw)) {
        std::string_view line = raw;
        if (first_line && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
        first_line = false;
        line = detail::trim(line);
        if (line.empty() || line.front() == fmt.comment) continue;

        if (!have_header) {
            if (delim == 0) delim = line.find('\t') != std::string_view::npos ? '\t' : ',';
            const auto names = detail::split(line, delim);
            ncols = names.size();
            for (std::size_t k = 0; k < kColumns.size(); ++k) {
                const auto it = std::find(names.begin(), names.end(), kColumns[k]);
                if (it == names.end())
                    throw DataError("missing column '" + std::string(kColumns[k]) + "' in header");
                col[k] = static_cast<std::size_t>(it - names.begin());
            }
            have_header = true;
            continue;
        }

        ++row;
        const auto fields = detail::split(line, delim);
        if (fields.size() != ncols)
            throw DataError("malformed row " + std::to_string(row) + ": expected " + std::to_string(ncols) +
                                " fields, got " + std::to_string(fields.size()),
                            row);
        std::array<double, 3> v{};
        for (std::size_t k = 0; k < 3; ++k) {
            if (!detail::parse_double(fields[col[k]], v[k]))
                throw DataError("malformed " + std::string(kColumns[k]) + " at row " + std::to_string(row), row);
            if (!std::isfinite(v[k]))
                throw DataError("non-finite " + std::string(kColumns[k]) + " at row " + std::to_string(row), row);
        }
        if (!out.depth.empty()) {
            if (!(v[0] > out.depth.back()))
                throw DataError("non-increasing depth at row " + std::to_string(row), row);
            if (!(v[1] > out.age.back()))
                throw DataError("non-increasing age at row " + std::to_string(row), row);
        }
        out.depth.push_back(v[0]);
        out.age.push_back(v[1]);
        out.temp.push_back(v[2]);
    }

    if (!have_header) throw DataError("empty input: no header line");
    if (out.size() < fmt.min_rows)
        throw DataError("too few rows: " + std::to_string(out.size()) + " (need at least " +
                        std::to_string(fmt.min_rows) + ")");
    return out;
}

inline RawCoreSeries load_core_file(const std::string& path, const CsvFormat& fmt = {}) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    return load_core(in, fmt);
}

/// Slice-wise AAR, mid-ages, mid-temperatures and log-AAR.
inline DerivedSeries derive(const RawCoreSeries& s) {
    const std::size_t m = s.size();
    if (s.age.size() != m || s.temp.size() != m) throw DataError("ragged core series");
    if (m < 2) throw DataError("need at least 2 core records to form a slice");

    DerivedSeries d;
    const std::size_t n = m - 1;
    d.z.resize(n);
    d.x.resize(n);
    d.b.resize(n);
    d.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double da = s.age[i + 1] - s.age[i];
        if (da == 0.0) throw DataError("zero age difference at slice " + std::to_string(i + 1), i + 1);
        const double b = (s.depth[i + 1] - s.depth[i]) / da;
        if (!(b > 0.0) || !std::isfinite(b))
            throw DataError("non-positive accumulation rate at slice " + std::to_string(i + 1), i + 1);
        d.z[i] = 0.5 * (s.age[i] + s.age[i + 1]);
        d.x[i] = 0.5 * (s.temp[i] + s.temp[i + 1]);
        d.b[i] = b;
        d.y[i] = std::log(b);
    }
    return d;
}

/// Smallest half-width a band may have, degC. Applies when the data are
/// one-signed (or identically zero).
inline constexpr double kTempBandFloor = 1e-3;

/// Band enclosing the observed temperatures with a relative margin.
inline TempBand default_temp_band(std::span<const double> x, double margin = 0.05) {
    if (x.empty()) throw DataError("default_temp_band: empty input");
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (!std::isfinite(*lo) || !std::isfinite(*hi)) throw DataError("default_temp_band: non-finite temperature");
    TempBand band;
    band.x_M = std::max(std::max(*hi, 0.0) * (1.0 + margin), kTempBandFloor);
    band.x_m = std::max(std::max(-*lo, 0.0) * (1.0 + margin), kTempBandFloor);
    return band;
}

/// Throws unless every x lies strictly inside the band.
inline void check_in_band(std::span<const double> x, const TempBand& band) {
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!band.contains(x[i]))
            throw DomainError("temperature " + std::to_string(x[i]) + " at index " + std::to_string(i + 1) +
                              " outside band");
}

} // namespace icecore
