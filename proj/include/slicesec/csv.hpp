#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace slicesec::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

// Minimal RFC-ish CSV: comma separated, optional double-quoted fields,
// CR stripped. Throws slicesec::Error on unterminated quotes.
Table read_table(const std::filesystem::path& path);
std::vector<std::string> split_line(const std::string& line);

}  // namespace slicesec::csv
