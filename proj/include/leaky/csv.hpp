#pragma once

#include <string>
#include <vector>

namespace leaky {

// Results tables are CSV with a leading schema-version comment line and a
// header row. All numeric formatting goes through fmt_double so reruns are
// byte-identical.
struct Table {
    std::string schema;  // e.g. "leakyclip.ablation.v1"
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> row);
    std::string to_csv() const;
    void write(const std::string& path) const;
};

// Reads a table previously produced by Table::write.
Table read_table(const std::string& path);

std::string fmt_double(double v, int precision = 9);
std::string fmt_int(long long v);

std::string csv_escape(const std::string& field);

}  // namespace leaky
