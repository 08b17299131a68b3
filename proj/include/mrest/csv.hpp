#pragma once

#include "mrest/types.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace mrest {

/// Shortest round-trip decimal representation; locale-free and stable, so
/// repeated runs produce byte-identical files.
inline std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& text) {
    if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (text == "inf") return std::numeric_limits<double>::infinity();
    if (text == "-inf") return -std::numeric_limits<double>::infinity();
    double value = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size())
        throw std::invalid_argument("bad numeric field: '" + text + "'");
    return value;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

/// Reads a CSV written by this library: optional "# schema: ..." first line,
/// then a header row, then data rows.
struct CsvTable {
    std::string schema;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw std::invalid_argument("missing CSV column: " + name);
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    CsvTable table;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (table.schema.empty()) table.schema = line;
            continue;
        }
        if (!have_header) {
            table.header = split_csv_line(line);
            have_header = true;
        } else {
            table.rows.push_back(split_csv_line(line));
        }
    }
    require(have_header, "no header row in " + path);
    return table;
}

class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::string& schema,
              const std::vector<std::string>& header)
        : out_(path, std::ios::trunc) {
        if (!out_) throw std::runtime_error("cannot write " + path);
        out_ << "# schema: " << schema << "\n";
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) out_ << ",";
            out_ << header[i];
        }
        out_ << "\n";
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ",";
            out_ << fields[i];
        }
        out_ << "\n";
    }

    void raw(const std::string& text) { out_ << text; }

  private:
    std::ofstream out_;
};

/// Plain-text named-matrix container: repeated blocks of
/// "name rows cols" followed by one row per line.
inline void write_matrix_block(std::ostream& out, const std::string& name, const Matrix& mat) {
    out << name << " " << mat.rows() << " " << mat.cols() << "\n";
    for (Index i = 0; i < mat.rows(); ++i) {
        for (Index j = 0; j < mat.cols(); ++j) {
            if (j) out << " ";
            out << format_double(mat(i, j));
        }
        out << "\n";
    }
}

inline std::vector<std::pair<std::string, Matrix>> read_matrix_blocks(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::pair<std::string, Matrix>> blocks;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream head(line);
        std::string name;
        Index rows = 0, cols = 0;
        head >> name >> rows >> cols;
        require(!name.empty() && rows > 0 && cols > 0, "bad matrix block header: " + line);
        Matrix mat(rows, cols);
        for (Index i = 0; i < rows; ++i) {
            require(static_cast<bool>(std::getline(in, line)), "truncated matrix block " + name);
            std::istringstream row(line);
            std::string field;
            for (Index j = 0; j < cols; ++j) {
                require(static_cast<bool>(row >> field), "short row in matrix block " + name);
                mat(i, j) = parse_double(field);
            }
        }
        blocks.emplace_back(name, std::move(mat));
    }
    return blocks;
}

}  // namespace mrest
