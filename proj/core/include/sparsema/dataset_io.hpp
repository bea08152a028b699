#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "sparsema/core.hpp"

namespace sparsema {

/// Header of the dataset CSV format.
inline constexpr std::string_view kDatasetHeader = "study_id,variate_id,estimate,std_err";

/// Split one CSV record. Double-quoted fields may contain commas and
/// doubled quotes.
std::vector<std::string> split_csv_line(std::string_view line);

/// Quote a field if it contains a delimiter, quote or whitespace at either end.
std::string csv_field(std::string_view field);

/// Parse a dataset. Rows of a study need not be contiguous; studies keep
/// their first-appearance order. Errors carry the 1-based line number.
MetaDataset read_dataset(std::istream& in);
MetaDataset read_dataset(const std::filesystem::path& path);

void write_dataset(std::ostream& out, const MetaDataset& data);
void write_dataset(const std::filesystem::path& path, const MetaDataset& data);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

}  // namespace sparsema
