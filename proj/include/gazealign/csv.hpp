#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gazealign {

// Minimal CSV support for the numeric schemas used here: comma-separated,
// first line is the header, no quoting. Rows shorter than the header are
// padded with empty cells; extra cells are kept and ignored by callers.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or -1 when absent. Comparison is exact.
  int column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::string& path);

// Empty or whitespace-only cells parse to nullopt; anything else must be a
// finite number or a ParseError names the row.
std::optional<double> parse_cell_double(std::string_view cell,
                                        std::size_t row_index,
                                        std::string_view column_name);

std::string read_text_file(const std::string& path);
void write_text_file_atomic(const std::string& path, std::string_view text);

}  // namespace gazealign
