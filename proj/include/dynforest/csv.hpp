#pragma once

#include <string>
#include <vector>

namespace dynforest::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

// Reads a comma-separated file with a header row. Fields are plain (no
// quoting); surrounding whitespace is trimmed. Empty lines are skipped.
Table read_file(const std::string& path);

void write_file(const std::string& path, const Table& table);

// Locale-independent double formatting with shortest round-trip, so that
// write -> read -> write is byte-stable.
std::string format_double(double v);
double parse_double(const std::string& s, const std::string& context);
long parse_long(const std::string& s, const std::string& context);

}  // namespace dynforest::csv
