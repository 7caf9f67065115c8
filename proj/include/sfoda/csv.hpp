#pragma once

// Minimal RFC-4180 style CSV reading and writing, plus the labeled dataset
// loader used by the CLI.

#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sfoda/error.hpp"
#include "sfoda/matrix.hpp"
#include "sfoda/text.hpp"

namespace sfoda {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    return std::nullopt;
  }
};

// Parses CSV text. Quoted fields may contain commas, newlines and doubled
// quotes. The first record is the header.
inline CsvTable parse_csv(std::string_view text, const std::string& origin = "<csv>") {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    records.push_back(std::move(record));
    record.clear();
  };
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (in_quotes) throw DataError(origin + ": unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();

  // Blank lines carry no data.
  std::erase_if(records, [](const auto& r) { return r.size() == 1 && trim(r[0]).empty(); });
  if (records.empty()) throw DataError(origin + ": missing header row");

  CsvTable table;
  table.header = std::move(records.front());
  for (auto& h : table.header) h = std::string(trim(h));
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw DataError(origin + ": ragged row " + std::to_string(r) + " has " +
                      std::to_string(records[r].size()) + " fields, header has " +
                      std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline CsvTable read_csv(const std::string& path) { return parse_csv(read_text_file(path), path); }

inline std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : path_(path), os_(path, std::ios::binary) {
    if (!os_) throw DataError("cannot open for writing: " + path);
  }

  void write_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) os_ << (i ? "," : "") << csv_escape(fields[i]);
    os_ << '\n';
    if (!os_) throw DataError("failed writing " + path_);
  }

 private:
  std::string path_;
  std::ofstream os_;
};

struct Dataset {
  std::vector<std::string> feature_names;
  Matrix features;
  std::optional<std::vector<int>> labels;
};

// Every column other than label_column is a feature. Cells are trimmed
// before parsing.
inline Dataset load_csv(const std::string& path, const std::string& label_column,
                        bool has_labels) {
  const CsvTable table = read_csv(path);
  std::optional<std::size_t> label_idx = table.column(label_column);
  if (has_labels && !label_idx) {
    throw DataError(path + ": label column '" + label_column + "' not found in header");
  }
  Dataset ds;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (label_idx && c == *label_idx) continue;
    feature_cols.push_back(c);
    ds.feature_names.push_back(table.header[c]);
  }
  if (feature_cols.empty()) throw DataError(path + ": no feature columns");

  ds.features = Matrix(table.rows.size(), feature_cols.size());
  std::vector<int> labels;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
      auto v = parse_double(row[feature_cols[k]]);
      if (!v) {
        throw DataError(path + ": non-numeric cell at row " + std::to_string(r + 1) +
                        ", column '" + table.header[feature_cols[k]] + "': '" +
                        row[feature_cols[k]] + "'");
      }
      ds.features(r, k) = *v;
    }
    if (has_labels) {
      auto v = parse_int(row[*label_idx]);
      if (!v || *v < 0) {
        throw DataError(path + ": bad label at row " + std::to_string(r + 1) + ": '" +
                        row[*label_idx] + "'");
      }
      labels.push_back(static_cast<int>(*v));
    }
  }
  if (has_labels) ds.labels = std::move(labels);
  return ds;
}

inline void write_features_csv(const std::string& path, const Matrix& x,
                               const std::vector<int>* labels = nullptr,
                               const std::string& label_column = "label") {
  CsvWriter w(path);
  std::vector<std::string> header;
  for (std::size_t c = 0; c < x.cols(); ++c) header.push_back("x" + std::to_string(c));
  if (labels) header.push_back(label_column);
  w.write_row(header);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::vector<std::string> fields;
    for (double v : x.row(r)) fields.push_back(format_double(v));
    if (labels) fields.push_back(std::to_string((*labels)[r]));
    w.write_row(fields);
  }
}

}  // namespace sfoda
