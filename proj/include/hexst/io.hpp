#pragma once

#include "errors.hpp"
#include "metrics.hpp"
#include "numerics.hpp"
#include "synth.hpp"
#include "windowing.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace hexst {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "binary containers assume a little-endian host");

inline std::vector<std::string> split(std::string_view line, char delim = ',') {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(delim, start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_double(std::string_view s, const std::string& where) {
    double v = 0.0;
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw InputError(where + ": cannot parse number '" + std::string(s) + "'");
    }
    return v;
}

inline std::ofstream open_for_write(const fs::path& path, bool binary = false) {
    std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    return os;
}

inline std::ifstream open_for_read(const fs::path& path, bool binary = false) {
    std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
    if (!is) throw IoError("cannot open " + path.string() + " for reading");
    return is;
}

inline void ensure_directory(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

// ---------------------------------------------------------------------------
// Flat binary matrix: <name>.bin holds raw little-endian float64 values in
// row-major order; <name>.meta is a text sidecar:
//   dtype=float64
//   endian=little
//   shape=<rows>,<cols>

inline void write_matrix(const fs::path& stem, const Tensor& m) {
    m.require_rank(2);
    {
        auto os = open_for_write(fs::path(stem.string() + ".bin"), true);
        os.write(reinterpret_cast<const char*>(m.values().data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!os) throw IoError("write failed for " + stem.string() + ".bin");
    }
    auto meta = open_for_write(fs::path(stem.string() + ".meta"));
    meta << "dtype=float64\nendian=little\nshape=" << m.rows() << "," << m.cols() << "\n";
}

inline Tensor read_matrix(const fs::path& stem) {
    auto meta = open_for_read(fs::path(stem.string() + ".meta"));
    std::string line;
    std::size_t rows = 0, cols = 0;
    bool have_shape = false;
    while (std::getline(meta, line)) {
        if (line.rfind("dtype=", 0) == 0 && line != "dtype=float64") throw InputError("unsupported dtype in " + stem.string());
        if (line.rfind("endian=", 0) == 0 && line != "endian=little") throw InputError("unsupported endianness in " + stem.string());
        if (line.rfind("shape=", 0) == 0) {
            const auto parts = split(std::string_view(line).substr(6));
            if (parts.size() != 2) throw InputError("bad shape line in " + stem.string());
            rows = static_cast<std::size_t>(parse_double(parts[0], stem.string()));
            cols = static_cast<std::size_t>(parse_double(parts[1], stem.string()));
            have_shape = true;
        }
    }
    if (!have_shape) throw InputError("missing shape in " + stem.string() + ".meta");
    Tensor m = Tensor::matrix(rows, cols);
    auto is = open_for_read(fs::path(stem.string() + ".bin"), true);
    is.read(reinterpret_cast<char*>(m.values().data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (static_cast<std::size_t>(is.gcount()) != m.size() * sizeof(double)) {
        throw InputError(stem.string() + ".bin is shorter than its declared shape");
    }
    return m;
}

// ---------------------------------------------------------------------------
// Spot table: header "spot_id,x,y,<gene...>", one row per spot.

inline void write_spot_table(const fs::path& path, const std::vector<std::string>& ids,
                             const std::vector<CartesianPoint>& coords, const Tensor& values,
                             const std::vector<std::string>& gene_names) {
    auto os = open_for_write(path);
    os << "spot_id,x,y";
    for (const auto& g : gene_names) os << "," << g;
    os << "\n";
    for (std::size_t i = 0; i < ids.size(); ++i) {
        os << ids[i] << "," << format_double(coords[i].x1) << "," << format_double(coords[i].x2);
        for (std::size_t j = 0; j < values.cols(); ++j) os << "," << format_double(values(i, j));
        os << "\n";
    }
    if (!os) throw IoError("write failed for " + path.string());
}

struct SpotTable {
    std::vector<std::string> ids;
    std::vector<CartesianPoint> coords;
    Tensor values;
    std::vector<std::string> gene_names;
};

inline SpotTable read_spot_table(const fs::path& path) {
    auto is = open_for_read(path);
    std::string line;
    if (!std::getline(is, line)) throw InputError(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split(line);
    if (header.size() < 3 || header[0] != "spot_id" || header[1] != "x" || header[2] != "y") {
        throw InputError(path.string() + ": header must start with spot_id,x,y");
    }
    SpotTable t;
    t.gene_names.assign(header.begin() + 3, header.end());
    std::vector<double> vals;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split(line);
        const std::string where = path.string() + ":" + std::to_string(lineno);
        if (cells.size() != header.size()) throw InputError(where + ": wrong column count");
        t.ids.push_back(cells[0]);
        t.coords.push_back({parse_double(cells[1], where), parse_double(cells[2], where)});
        for (std::size_t j = 3; j < cells.size(); ++j) vals.push_back(parse_double(cells[j], where));
    }
    t.values = Tensor({t.ids.size(), t.gene_names.size()}, std::move(vals));
    return t;
}

// ---------------------------------------------------------------------------
// Dataset directory: spots.csv, tokens.{bin,meta}, optional transcriptomic.{bin,meta}

inline void write_dataset(const fs::path& dir, const SpotDataset& ds) {
    ds.validate();
    ensure_directory(dir);
    write_spot_table(dir / "spots.csv", ds.spot_ids, ds.coords, ds.expression, ds.gene_names);
    write_matrix(dir / "tokens", ds.tokens);
    if (ds.transcriptomic) write_matrix(dir / "transcriptomic", *ds.transcriptomic);
}

inline SpotDataset read_dataset(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
    SpotTable t = read_spot_table(dir / "spots.csv");
    SpotDataset ds;
    ds.spot_ids = std::move(t.ids);
    ds.coords = std::move(t.coords);
    ds.expression = std::move(t.values);
    ds.gene_names = std::move(t.gene_names);
    ds.tokens = read_matrix(dir / "tokens");
    if (fs::exists(dir / "transcriptomic.meta")) ds.transcriptomic = read_matrix(dir / "transcriptomic");
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Partition export: spot_id,stage,block,window_index,slot_index,center_x,center_y

inline void write_partition_header(std::ostream& os) {
    os << "spot_id,stage,block,window_index,slot_index,center_x,center_y\n";
}

inline void write_partition_records(std::ostream& os, const WindowPartition& p, const std::vector<std::string>& ids) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const int w = p.window_of_spot[i];
        os << ids[i] << "," << p.stage << "," << p.block << "," << w << "," << p.slot_of_spot[i] << ",";
        if (w >= 0) {
            const auto& c = p.windows[static_cast<std::size_t>(w)].center;
            os << format_double(c.x1) << "," << format_double(c.x2);
        } else {
            os << ",";
        }
        os << "\n";
    }
}

} // namespace hexst
