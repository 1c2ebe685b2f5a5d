#include "adrctl/csv.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <system_error>

#include "adrctl/errors.hpp"

namespace adrctl {

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

double parse_double(const std::string& text) {
    const std::string t = trim(text);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size())
        throw ConfigError("csv", "not a number: '" + text + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string::size_type start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

void write_snapshot_rows(std::ostream& out, double t, const ScalarField& y) {
    const std::string ts = format_double(t);
    for (int k = 0; k < y.size(); ++k) out << ts << ',' << k << ',' << format_double(y.values[k]) << '\n';
}

std::vector<double> read_tabulated_values(std::istream& in) {
    std::vector<double> values;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto cols = split_csv_line(t);
        try {
            values.push_back(parse_double(cols.back()));
        } catch (const ConfigError&) {
            if (!first) throw;
        }
        first = false;
    }
    return values;
}

}  // namespace adrctl
