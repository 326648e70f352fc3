#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "strucdiff/schema.hpp"

namespace strucdiff {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// RFC 4180 style: comma separated, double-quote escaping, LF or CRLF.
CsvTable parse_csv(std::string_view text);
std::string write_csv(const CsvTable& table);

struct CsvOptions {
  int categorical_cutoff = 20;          // max distinct labels for a categorical column
  std::string missing_sentinel = "NA";  // besides the empty cell
  int text_max_length = 32;             // floor; grows to the longest observed value
  std::map<std::string, PropertyKind> type_hints;
};

EntitySchema infer_schema_from_csv(std::string_view text, const CsvOptions& options = {});
EntitySchema infer_schema(const CsvTable& table, const CsvOptions& options = {});

// Maps columns to leaves by path; every leaf must have a column.
Dataset read_csv_dataset(std::string_view text, const EntitySchema& schema, const CsvOptions& options = {});
Dataset table_to_dataset(const CsvTable& table, const EntitySchema& schema, const CsvOptions& options = {});
std::string write_csv_dataset(const Dataset& rows, const EntitySchema& schema);

// One JSON object per line, nested to mirror the schema tree. Absent keys and
// nulls are Missing.
Dataset read_jsonl_dataset(std::string_view text, const EntitySchema& schema);
std::string write_jsonl_dataset(const Dataset& rows, const EntitySchema& schema);

// Shortest representation that parses back to the same double.
std::string format_number(double x);

}  // namespace strucdiff
