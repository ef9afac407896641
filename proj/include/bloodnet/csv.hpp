#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace bloodnet::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index for a header name; throws ParseError if absent.
    std::size_t column(const std::string& name) const;
};

/// Read a comma-separated file. Blank lines and lines starting with '#' are
/// skipped. No quoting support; fields in this project never contain commas.
Table read_file(const std::filesystem::path& path);
Table read_string(const std::string& text, const std::string& origin = "<string>");

/// Write rows atomically (temp file + rename) with a fixed column order.
void write_file(const std::filesystem::path& path,
                const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows);

std::string format_double(double v);

}  // namespace bloodnet::csv
