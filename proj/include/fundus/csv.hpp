#pragma once

#include <string>
#include <vector>

namespace fundus {

// Minimal RFC-4180-style CSV. Fields are quoted on write only when they
// contain a comma, quote, or newline.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string csv_escape(const std::string& field);
std::string csv_join(const std::vector<std::string>& fields);

CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);
void write_csv(const std::string& path, const CsvTable& table);

// Shortest round-trip decimal formatting; used everywhere a real number is
// written to CSV/JSON so identical runs produce identical bytes.
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace fundus
