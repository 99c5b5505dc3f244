#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pipeforge/common.hpp"

namespace pipeforge {

enum class ColumnKind { numeric, categorical };

struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::numeric;
  // categorical only: code -> original string, in order of first appearance
  std::vector<std::string> categories;
};

// Tabular feature matrix with per-cell missing flags plus an integer class
// target.  Immutable after construction; cheap to share between threads.
struct Dataset {
  std::vector<Column> columns;
  std::size_t rows = 0;
  std::vector<double> values;        // row-major rows x columns
  std::vector<std::uint8_t> missing; // same shape
  std::vector<int> target;           // empty when absent (predict-time data)
  std::vector<std::string> class_names;

  std::size_t cols() const { return columns.size(); }
  bool has_target() const { return !target.empty(); }
  int n_classes() const { return static_cast<int>(class_names.size()); }

  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  bool is_missing(std::size_t r, std::size_t c) const { return missing[r * cols() + c] != 0; }
  void set_missing(std::size_t r, std::size_t c, bool m) { missing[r * cols() + c] = m ? 1 : 0; }

  std::size_t missing_count() const {
    std::size_t n = 0;
    for (auto m : missing) n += m;
    return n;
  }

  bool has_missing() const {
    for (auto m : missing) {
      if (m) return true;
    }
    return false;
  }

  static Dataset with_shape(std::size_t rows, std::vector<Column> cols) {
    Dataset d;
    d.rows = rows;
    d.columns = std::move(cols);
    d.values.assign(rows * d.columns.size(), 0.0);
    d.missing.assign(rows * d.columns.size(), 0);
    return d;
  }

  // Content hash of one row (features + target), independent of row position.
  std::uint64_t row_hash(std::size_t r, std::uint64_t seed = 0) const {
    std::uint64_t h = seed;
    for (std::size_t c = 0; c < cols(); ++c) {
      if (is_missing(r, c)) {
        h = hash_mix(h, 0x4d495353ULL);  // "MISS"
      } else {
        h = hash_double(at(r, c), h);
      }
    }
    if (has_target()) h = hash_mix(h, static_cast<std::uint64_t>(target[r]) + 1);
    return h;
  }

  Dataset subset_rows(const std::vector<std::size_t>& idx) const {
    Dataset out;
    out.columns = columns;
    out.class_names = class_names;
    out.rows = idx.size();
    out.values.reserve(idx.size() * cols());
    out.missing.reserve(idx.size() * cols());
    if (has_target()) out.target.reserve(idx.size());
    for (std::size_t r : idx) {
      for (std::size_t c = 0; c < cols(); ++c) {
        out.values.push_back(at(r, c));
        out.missing.push_back(missing[r * cols() + c]);
      }
      if (has_target()) out.target.push_back(target[r]);
    }
    return out;
  }

  std::size_t byte_size() const {
    return values.size() * sizeof(double) + missing.size() + target.size() * sizeof(int) +
           columns.size() * 64;
  }
};

struct CsvOptions {
  std::vector<std::string> missing_tokens = {"", "?", "NA"};
};

namespace detail {

// RFC 4180 record parser. Returns one row of fields, advancing `pos`.
inline bool csv_next_record(const std::string& text, std::size_t& pos,
                            std::vector<std::string>& fields) {
  fields.clear();
  if (pos >= text.size()) return false;
  std::string cur;
  bool in_quotes = false;
  bool any = false;
  while (pos < text.size()) {
    const char c = text[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          cur.push_back('"');
          pos += 2;
        } else {
          in_quotes = false;
          ++pos;
        }
      } else {
        cur.push_back(c);
        ++pos;
      }
      any = true;
      continue;
    }
    if (c == '"') {
      in_quotes = true;
      any = true;
      ++pos;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
      any = true;
      ++pos;
    } else if (c == '\r') {
      ++pos;
    } else if (c == '\n') {
      ++pos;
      fields.push_back(cur);
      return true;
    } else {
      cur.push_back(c);
      any = true;
      ++pos;
    }
  }
  if (in_quotes) throw std::runtime_error("csv: unterminated quoted field");
  if (!any && fields.empty()) return false;
  fields.push_back(cur);
  return true;
}

inline bool parse_double(const std::string& s, double& out) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return false;
  std::size_t e = s.find_last_not_of(" \t");
  const std::string t = s.substr(b, e - b + 1);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE) return false;
  if (!std::isfinite(v)) return false;
  out = v;
  return true;
}

inline bool is_missing_token(const std::string& s, const CsvOptions& opt) {
  for (const auto& tok : opt.missing_tokens) {
    if (s == tok) return true;
  }
  return false;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline RawTable read_csv_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();

  RawTable t;
  std::size_t pos = 0;
  if (!csv_next_record(text, pos, t.header) || t.header.empty()) {
    throw std::runtime_error("csv: missing header row in " + path);
  }
  std::vector<std::string> fields;
  while (csv_next_record(text, pos, fields)) {
    if (fields.size() != t.header.size()) {
      throw std::runtime_error("csv: ragged row " + std::to_string(t.rows.size() + 2) + " in " +
                               path + " (expected " + std::to_string(t.header.size()) +
                               " fields, got " + std::to_string(fields.size()) + ")");
    }
    t.rows.push_back(fields);
  }
  return t;
}

}  // namespace detail

// Loads a training CSV.  Columns whose non-missing cells all parse as numbers
// become numeric; everything else becomes categorical with dense codes in
// order of first appearance.  The target column must be fully observed and
// carry at least two classes.
inline Dataset load_csv(const std::string& path, const std::string& target_name,
                        const CsvOptions& opt = {}) {
  const detail::RawTable t = detail::read_csv_raw(path);

  std::size_t target_idx = t.header.size();
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i] == target_name) {
      target_idx = i;
      break;
    }
  }
  if (target_idx == t.header.size()) {
    throw std::runtime_error("csv: target column '" + target_name + "' not found in " + path);
  }

  const std::size_t m = t.rows.size();
  std::vector<std::size_t> feature_idx;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i != target_idx) feature_idx.push_back(i);
  }

  Dataset d;
  d.rows = m;
  d.columns.reserve(feature_idx.size());

  // Column typing pass.
  std::vector<bool> numeric(feature_idx.size(), true);
  for (std::size_t c = 0; c < feature_idx.size(); ++c) {
    for (std::size_t r = 0; r < m; ++r) {
      const std::string& cell = t.rows[r][feature_idx[c]];
      if (detail::is_missing_token(cell, opt)) continue;
      double v;
      if (!detail::parse_double(cell, v)) {
        numeric[c] = false;
        break;
      }
    }
  }

  d.values.assign(m * feature_idx.size(), 0.0);
  d.missing.assign(m * feature_idx.size(), 0);
  for (std::size_t c = 0; c < feature_idx.size(); ++c) {
    Column col;
    col.name = t.header[feature_idx[c]];
    col.kind = numeric[c] ? ColumnKind::numeric : ColumnKind::categorical;
    std::map<std::string, int> code_of;
    for (std::size_t r = 0; r < m; ++r) {
      const std::string& cell = t.rows[r][feature_idx[c]];
      if (detail::is_missing_token(cell, opt)) {
        d.missing[r * feature_idx.size() + c] = 1;
        continue;
      }
      if (numeric[c]) {
        double v = 0;
        detail::parse_double(cell, v);
        d.values[r * feature_idx.size() + c] = v;
      } else {
        auto it = code_of.find(cell);
        int code;
        if (it == code_of.end()) {
          code = static_cast<int>(col.categories.size());
          code_of.emplace(cell, code);
          col.categories.push_back(cell);
        } else {
          code = it->second;
        }
        d.values[r * feature_idx.size() + c] = static_cast<double>(code);
      }
    }
    d.columns.push_back(std::move(col));
  }

  // Target pass.
  std::map<std::string, int> class_code;
  d.target.reserve(m);
  for (std::size_t r = 0; r < m; ++r) {
    const std::string& cell = t.rows[r][target_idx];
    if (detail::is_missing_token(cell, opt)) {
      throw std::runtime_error("csv: target column contains missing value at row " +
                               std::to_string(r + 2));
    }
    auto it = class_code.find(cell);
    int code;
    if (it == class_code.end()) {
      code = static_cast<int>(d.class_names.size());
      class_code.emplace(cell, code);
      d.class_names.push_back(cell);
    } else {
      code = it->second;
    }
    d.target.push_back(code);
  }
  if (d.class_names.size() < 2) {
    throw std::runtime_error("csv: target column '" + target_name + "' has fewer than 2 classes");
  }
  return d;
}

// Loads prediction-time data against a training schema: columns are matched
// by name and reordered, categorical strings are mapped through the training
// codes (unseen strings get code = n_categories), and the target column is
// optional.  Missing schema columns are a hard error naming the columns.
inline Dataset load_csv_with_schema(const std::string& path, const std::vector<Column>& schema,
                                    const std::vector<std::string>& class_names,
                                    const std::string& target_name, const CsvOptions& opt = {}) {
  const detail::RawTable t = detail::read_csv_raw(path);

  std::map<std::string, std::size_t> col_of;
  for (std::size_t i = 0; i < t.header.size(); ++i) col_of[t.header[i]] = i;

  std::vector<std::string> absent;
  std::vector<std::size_t> src(schema.size(), 0);
  for (std::size_t c = 0; c < schema.size(); ++c) {
    auto it = col_of.find(schema[c].name);
    if (it == col_of.end()) {
      absent.push_back(schema[c].name);
    } else {
      src[c] = it->second;
    }
  }
  if (!absent.empty()) {
    std::string msg = "schema mismatch: missing column(s):";
    for (const auto& a : absent) msg += " " + a;
    throw std::runtime_error(msg);
  }

  const std::size_t m = t.rows.size();
  Dataset d = Dataset::with_shape(m, schema);
  d.class_names = class_names;

  for (std::size_t c = 0; c < schema.size(); ++c) {
    std::map<std::string, int> code_of;
    for (std::size_t k = 0; k < schema[c].categories.size(); ++k) {
      code_of[schema[c].categories[k]] = static_cast<int>(k);
    }
    for (std::size_t r = 0; r < m; ++r) {
      const std::string& cell = t.rows[r][src[c]];
      if (detail::is_missing_token(cell, opt)) {
        d.set_missing(r, c, true);
        continue;
      }
      if (schema[c].kind == ColumnKind::numeric) {
        double v;
        if (detail::parse_double(cell, v)) {
          d.at(r, c) = v;
        } else {
          d.set_missing(r, c, true);
        }
      } else {
        auto it = code_of.find(cell);
        d.at(r, c) = it != code_of.end()
                         ? static_cast<double>(it->second)
                         : static_cast<double>(schema[c].categories.size());  // unseen bucket
      }
    }
  }

  auto it = col_of.find(target_name);
  if (it != col_of.end()) {
    std::map<std::string, int> class_code;
    for (std::size_t k = 0; k < class_names.size(); ++k) {
      class_code[class_names[k]] = static_cast<int>(k);
    }
    bool all_known = true;
    std::vector<int> tgt(m, 0);
    for (std::size_t r = 0; r < m && all_known; ++r) {
      const std::string& cell = t.rows[r][it->second];
      auto c = class_code.find(cell);
      if (c == class_code.end()) {
        all_known = false;
      } else {
        tgt[r] = c->second;
      }
    }
    if (all_known && m > 0) d.target = std::move(tgt);
  }
  return d;
}

// Deterministic stratified holdout split.  Every class keeps at least one
// instance on each side; proportions are within one instance of exact
// stratification.
inline std::pair<Dataset, Dataset> stratified_split(const Dataset& d, double valid_fraction,
                                                    std::uint64_t seed) {
  if (!(valid_fraction > 0.0 && valid_fraction < 0.5)) {
    throw std::invalid_argument("stratified_split: valid_fraction must be in (0, 0.5)");
  }
  if (!d.has_target()) throw std::invalid_argument("stratified_split: dataset has no target");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t r = 0; r < d.rows; ++r) by_class[d.target[r]].push_back(r);
  for (const auto& [cls, idx] : by_class) {
    if (idx.size() < 2) {
      throw std::runtime_error("unsplittable class: class '" +
                               (cls < static_cast<int>(d.class_names.size())
                                    ? d.class_names[cls]
                                    : std::to_string(cls)) +
                               "' has a single instance");
    }
  }

  std::vector<std::size_t> valid_rows;
  std::vector<std::size_t> train_rows;
  for (auto& [cls, idx] : by_class) {
    Rng rng(hash_mix(hash_mix(seed, 0x53504c49ULL), static_cast<std::uint64_t>(cls)));
    rng.shuffle(idx);
    const auto n = static_cast<double>(idx.size());
    auto n_valid = static_cast<std::size_t>(std::llround(n * valid_fraction));
    n_valid = std::max<std::size_t>(1, std::min(n_valid, idx.size() - 1));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < n_valid ? valid_rows : train_rows).push_back(idx[i]);
    }
  }
  std::sort(valid_rows.begin(), valid_rows.end());
  std::sort(train_rows.begin(), train_rows.end());
  return {d.subset_rows(train_rows), d.subset_rows(valid_rows)};
}

// Writes a dataset back to CSV (used by the bundled-data generator and tests).
inline void save_csv(const Dataset& d, const std::string& path,
                     const std::string& target_name = "target") {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += "\"\"";
      else q.push_back(c);
    }
    q += "\"";
    return q;
  };
  for (std::size_t c = 0; c < d.cols(); ++c) {
    if (c) out << ',';
    out << quote(d.columns[c].name);
  }
  if (d.has_target()) out << (d.cols() ? "," : "") << quote(target_name);
  out << '\n';
  char buf[64];
  for (std::size_t r = 0; r < d.rows; ++r) {
    for (std::size_t c = 0; c < d.cols(); ++c) {
      if (c) out << ',';
      if (d.is_missing(r, c)) {
        out << '?';
      } else if (d.columns[c].kind == ColumnKind::categorical) {
        const auto code = static_cast<std::size_t>(d.at(r, c));
        out << quote(code < d.columns[c].categories.size() ? d.columns[c].categories[code]
                                                           : "unk");
      } else {
        std::snprintf(buf, sizeof(buf), "%.17g", d.at(r, c));
        out << buf;
      }
    }
    if (d.has_target()) {
      out << (d.cols() ? "," : "") << quote(d.class_names[d.target[r]]);
    }
    out << '\n';
  }
}

}  // namespace pipeforge
