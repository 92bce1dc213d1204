#include "leaky/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "leaky/common.hpp"

namespace leaky {

std::string fmt_double(double v, int precision) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    // Avoid the "-0" spelling; it flips with summation order.
    if (buf[0] == '-' && std::strtod(buf, nullptr) == 0.0) return buf + 1;
    return buf;
}

std::string fmt_int(long long v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld", v);
    return buf;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out += "\"\"";
        else out += ch;
    }
    out += '"';
    return out;
}

void Table::add_row(std::vector<std::string> row) {
    require(row.size() == header.size(), ErrorKind::validation,
            "table row width mismatch");
    rows.push_back(std::move(row));
}

std::string Table::to_csv() const {
    std::string out = "# schema=" + schema + "\n";
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out += ',';
        out += csv_escape(header[i]);
    }
    out += '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += csv_escape(row[i]);
        }
        out += '\n';
    }
    return out;
}

namespace {
std::vector<std::string> parse_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}
}  // namespace

Table read_table(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorKind::ingest, "cannot read table: " + path);
    Table t;
    std::string line;
    bool have_header = false;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("# schema=", 0) == 0) {
            t.schema = line.substr(9);
            continue;
        }
        if (line[0] == '#') continue;
        if (!have_header) {
            t.header = parse_csv_line(line);
            have_header = true;
        } else {
            t.add_row(parse_csv_line(line));
        }
    }
    require(have_header, ErrorKind::ingest, "table has no header: " + path);
    return t;
}

void Table::write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorKind::ingest, "cannot write table: " + path);
    f << to_csv();
}

}  // namespace leaky
