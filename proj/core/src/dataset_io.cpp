#include "sparsema/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "sparsema/errors.hpp"

namespace sparsema {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

double parse_number(std::string_view text, std::size_t line, const char* column) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError(line, std::string(column) + " '" + std::string(text) +
                               "' is not a decimal number");
  }
  return value;
}

}  // namespace

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r' || i + 1 != line.size()) {
      current += c;
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::string csv_field(std::string_view field) {
  const bool needs_quotes =
      field.find_first_of(",\"\n") != std::string_view::npos ||
      (!field.empty() && (field.front() == ' ' || field.back() == ' '));
  if (!needs_quotes) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

MetaDataset read_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<Study> studies;
  std::map<std::string, std::size_t> study_index;
  std::map<std::pair<std::string, std::string>, std::size_t> first_seen;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!have_header) {
      std::string_view header = trim(line);
      if (header.size() >= 3 && header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
      if (header != kDatasetHeader) {
        throw ParseError(line_no, "expected header '" + std::string(kDatasetHeader) + "'");
      }
      have_header = true;
      continue;
    }
    auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      throw ParseError(line_no, "expected 4 fields, found " + std::to_string(fields.size()));
    }
    std::string study_id(trim(fields[0]));
    std::string variate_id(trim(fields[1]));
    if (study_id.empty() || variate_id.empty()) {
      throw ParseError(line_no, "study_id and variate_id must be non-empty");
    }
    const double y = parse_number(fields[2], line_no, "estimate");
    const double se = parse_number(fields[3], line_no, "std_err");
    if (!std::isfinite(y)) {
      throw ParseError(line_no, "estimate must be finite");
    }
    if (!(se > 0.0) || !std::isfinite(se)) {
      throw ParseError(line_no, "std_err must be positive and finite");
    }
    auto key = std::make_pair(study_id, variate_id);
    if (auto it = first_seen.find(key); it != first_seen.end()) {
      throw ParseError(line_no, "duplicate (study_id, variate_id) pair ('" + study_id + "', '" +
                                    variate_id + "'), first seen on line " +
                                    std::to_string(it->second));
    }
    first_seen.emplace(std::move(key), line_no);
    auto [it, inserted] = study_index.try_emplace(study_id, studies.size());
    if (inserted) {
      studies.push_back(Study{study_id, {}});
    }
    studies[it->second].estimates.push_back(Estimate{std::move(variate_id), y, se});
  }
  if (!have_header) {
    throw ParseError(line_no == 0 ? 1 : line_no, "missing header row");
  }
  if (studies.empty()) {
    throw ParseError(line_no, "no data rows");
  }
  return MetaDataset(std::move(studies));
}

MetaDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open dataset '" + path.string() + "'");
  }
  return read_dataset(in);
}

void write_dataset(std::ostream& out, const MetaDataset& data) {
  out << kDatasetHeader << '\n';
  for (const auto& study : data.studies()) {
    for (const auto& est : study.estimates) {
      out << csv_field(study.study_id) << ',' << csv_field(est.variate_id) << ','
          << format_double(est.y) << ',' << format_double(est.se) << '\n';
    }
  }
}

void write_dataset(const std::filesystem::path& path, const MetaDataset& data) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write dataset '" + path.string() + "'");
  }
  write_dataset(out, data);
}

std::string format_double(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace sparsema
