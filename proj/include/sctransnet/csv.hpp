#ifndef SCTRANSNET_CSV_HPP
#define SCTRANSNET_CSV_HPP

#include <string>
#include <vector>

namespace scnet {

// Parsed CSV contents. Comment lines (leading '#') are collected separately
// so outputs can carry seed/config metadata without breaking readers.
struct CsvFile {
    std::vector<std::string> comments;
    std::vector<std::vector<std::string>> rows;
};

// Reads a comma-separated file. Handles CRLF, trims surrounding whitespace,
// strips simple double quotes. InputError if the file cannot be opened.
CsvFile read_csv(const std::string& path);

// Splits one CSV line (no embedded-comma quoting needed for our formats).
std::vector<std::string> split_csv_line(const std::string& line);

void write_text_file(const std::string& path, const std::string& contents);
std::string read_text_file(const std::string& path);
bool file_exists(const std::string& path);
void ensure_directory(const std::string& path);

std::string upper_ascii(std::string s);

}  // namespace scnet

#endif
