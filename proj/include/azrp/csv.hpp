#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace azrp {

/// Quotes a field when it contains a comma, quote or line break (RFC 4180).
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

inline std::string csv_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(std::numeric_limits<double>::max_digits10);
    os << x;
    return os.str();
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path), width_(header.size()) {
        if (!out_) throw std::runtime_error("cannot open " + path);
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != width_) throw std::invalid_argument("csv row has the wrong width");
        for (std::size_t k = 0; k < cells.size(); ++k) out_ << (k ? "," : "") << csv_field(cells[k]);
        out_ << "\r\n";
    }

private:
    std::ofstream out_;
    std::size_t width_;
};

} // namespace azrp
