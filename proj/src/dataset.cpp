#include "cfd/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

#include "cfd/rng.hpp"

namespace cfd::data {

using nlohmann::json;

ColumnKind parse_column_kind(const std::string& s) {
  if (s == "numerical") return ColumnKind::numerical;
  if (s == "categorical") return ColumnKind::categorical;
  if (s == "label") return ColumnKind::label;
  if (s == "ignore") return ColumnKind::ignore;
  throw ConfigError("unknown column kind '" + s + "'");
}

const char* to_string(ColumnKind k) {
  switch (k) {
    case ColumnKind::numerical: return "numerical";
    case ColumnKind::categorical: return "categorical";
    case ColumnKind::label: return "label";
    case ColumnKind::ignore: return "ignore";
  }
  return "?";
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

// ---------------------------------------------------------------- Schema

void Schema::validate() const {
  std::size_t labels = 0;
  std::set<std::string> names;
  for (const auto& c : columns) {
    if (c.name.empty()) throw ConfigError("schema has a column with an empty name");
    if (!names.insert(c.name).second) throw ConfigError("duplicate schema column '" + c.name + "'");
    if (c.kind == ColumnKind::label) ++labels;
  }
  if (labels != 1) {
    throw ConfigError("schema must have exactly one label column, found " + std::to_string(labels));
  }
  if (positive_label.empty()) throw ConfigError("schema is missing positive_label");
  const auto it = std::find_if(columns.begin(), columns.end(),
                               [&](const ColumnSpec& c) { return c.name == protected_attribute; });
  if (it == columns.end()) {
    throw ConfigError("protected attribute '" + protected_attribute + "' is not a schema column");
  }
  if (it->kind != ColumnKind::categorical) {
    throw ConfigError("protected attribute '" + protected_attribute +
                      "' must be categorical to be binary-encodable");
  }
  double sum = 0.0;
  for (double r : split_ratios) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be nonnegative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

std::size_t Schema::label_column() const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].kind == ColumnKind::label) return i;
  }
  throw ConfigError("schema has no label column");
}

const ColumnSpec& Schema::column(const std::string& name) const {
  for (const auto& c : columns) {
    if (c.name == name) return c;
  }
  throw ConfigError("no schema column named '" + name + "'");
}

Schema Schema::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("schema is not valid JSON: ") + e.what());
  }
  Schema s;
  try {
    for (const auto& c : j.at("columns")) {
      s.columns.push_back({c.at("name").get<std::string>(),
                           parse_column_kind(c.at("kind").get<std::string>())});
    }
    s.protected_attribute = j.at("protected_attribute").get<std::string>();
    s.positive_label = j.at("positive_label").get<std::string>();
    if (j.contains("negative_label")) s.negative_label = j["negative_label"].get<std::string>();
    if (j.contains("delimiter")) {
      const auto d = j["delimiter"].get<std::string>();
      if (d.size() != 1) throw ConfigError("delimiter must be a single character");
      s.delimiter = d[0];
    }
    if (j.contains("split_seed")) s.split_seed = j["split_seed"].get<std::uint64_t>();
    if (j.contains("split_ratios")) {
      const auto r = j["split_ratios"].get<std::vector<double>>();
      if (r.size() != 3) throw ConfigError("split_ratios must have three entries");
      std::copy(r.begin(), r.end(), s.split_ratios.begin());
    }
    if (j.contains("bias_feature")) s.bias_feature = j["bias_feature"].get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed schema: ") + e.what());
  }
  s.validate();
  return s;
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open schema file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string Schema::to_json_text() const {
  json j;
  j["columns"] = json::array();
  for (const auto& c : columns) j["columns"].push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
  j["protected_attribute"] = protected_attribute;
  j["positive_label"] = positive_label;
  if (negative_label) j["negative_label"] = *negative_label;
  j["delimiter"] = std::string(1, delimiter);
  j["split_seed"] = split_seed;
  j["split_ratios"] = split_ratios;
  j["bias_feature"] = bias_feature;
  return j.dump(2);
}

std::uint64_t Schema::digest() const {
  Fnv1a h;
  h.update(json::parse(to_json_text()).dump());
  return h.digest();
}

// ---------------------------------------------------------------- CSV

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Splits one record; double quotes protect delimiters and "" escapes a quote.
std::vector<std::string> split_record(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  if (b != e && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && std::isfinite(out);
}

}  // namespace

RawDataset parse_csv(const std::string& text, const Schema& schema) {
  schema.validate();
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_record(line, schema.delimiter);
      break;
    }
  }
  if (header.empty()) throw DatasetError("dataset file is empty");
  if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);

  std::vector<std::size_t> positions;
  for (const auto& c : schema.columns) {
    const auto it = std::find(header.begin(), header.end(), c.name);
    if (it == header.end()) throw DatasetError("dataset header is missing column '" + c.name + "'");
    positions.push_back(static_cast<std::size_t>(it - header.begin()));
  }

  const std::size_t label_col = schema.label_column();
  std::set<std::string> label_tokens;
  RawDataset raw;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_record(line, schema.delimiter);
    if (fields.size() != header.size()) {
      throw DatasetError("row " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                         " fields, header has " + std::to_string(header.size()));
    }
    std::vector<std::string> row;
    row.reserve(schema.columns.size());
    bool incomplete = false;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      row.push_back(fields[positions[c]]);
      if (schema.columns[c].kind != ColumnKind::ignore && row.back().empty()) incomplete = true;
    }
    if (incomplete) {
      ++raw.dropped_rows;
      continue;
    }
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
      double v;
      if (schema.columns[c].kind == ColumnKind::numerical && !parse_double(row[c], v)) {
        throw DatasetError("row " + std::to_string(line_no) + ": column '" + schema.columns[c].name +
                           "' value '" + row[c] + "' is not numeric");
      }
    }
    const auto& tok = row[label_col];
    if (schema.negative_label) {
      if (tok != schema.positive_label && tok != *schema.negative_label) {
        throw DatasetError("row " + std::to_string(line_no) + ": unknown label token '" + tok + "'");
      }
    } else {
      label_tokens.insert(tok);
      if (label_tokens.size() > 2) {
        throw DatasetError("row " + std::to_string(line_no) + ": unknown label token '" + tok +
                           "' (labels must be binary)");
      }
    }
    raw.rows.push_back(std::move(row));
    raw.source_lines.push_back(line_no);
  }
  return raw;
}

RawDataset load_csv(const std::filesystem::path& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), schema);
}

// ---------------------------------------------------------------- split

std::vector<Split> split(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed) {
  if (n == 0) throw DatasetError("cannot split an empty dataset");
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9 || ratios[0] < 0 || ratios[1] < 0 || ratios[2] < 0) {
    throw ConfigError("split ratios must be nonnegative and sum to 1");
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  rng.shuffle(perm);

  // Small epsilon keeps e.g. 0.6*10 from flooring to 5.
  const auto n_train = static_cast<std::size_t>(std::floor(ratios[0] * static_cast<double>(n) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(ratios[1] * static_cast<double>(n) + 1e-9));
  std::vector<Split> tags(n, Split::test);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) {
      tags[perm[i]] = Split::train;
    } else if (i < n_train + n_val) {
      tags[perm[i]] = Split::val;
    }
  }
  return tags;
}

// ---------------------------------------------------------------- Dataset

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.push_back(i);
  }
  return out;
}

std::size_t Dataset::group_of(std::span<const double> x) const {
  const auto& g = protected_feature();
  if (x.size() < g.offset + g.width) throw linalg::ShapeError("input shorter than feature map");
  std::size_t best = 0;
  for (std::size_t k = 1; k < g.width; ++k) {
    if (x[g.offset + k] > x[g.offset + best]) best = k;
  }
  return best;
}

std::uint64_t Dataset::digest() const {
  Fnv1a h;
  const std::uint64_t dims[2] = {X.rows(), X.cols()};
  h.update(dims, sizeof dims);
  h.update(X.data());
  h.update(y);
  for (auto s : splits) h.update(&s, 1);
  return h.digest();
}

Dataset preprocess(const RawDataset& raw, const Schema& schema, std::span<const Split> splits) {
  schema.validate();
  if (raw.size() == 0) throw DatasetError("no rows left after dropping incomplete ones");
  if (splits.size() != raw.size()) throw DatasetError("split tags do not match row count");

  Dataset d;
  d.raw_rows = raw.rows;
  d.splits.assign(splits.begin(), splits.end());
  const std::size_t n = raw.size();

  std::size_t dim = 0;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto& col = schema.columns[c];
    if (col.kind != ColumnKind::numerical && col.kind != ColumnKind::categorical) continue;
    FeatureGroup g;
    g.column = col.name;
    g.kind = col.kind;
    g.offset = dim;
    if (col.kind == ColumnKind::numerical) {
      g.width = 1;
      double sum = 0.0;
      std::size_t count = 0;
      std::vector<double> vals(n);
      for (std::size_t r = 0; r < n; ++r) {
        parse_double(raw.rows[r][c], vals[r]);
        if (splits[r] == Split::train) {
          sum += vals[r];
          ++count;
        }
      }
      if (count == 0) throw DatasetError("train split is empty; cannot normalize '" + col.name + "'");
      g.mean = sum / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        if (splits[r] == Split::train) ss += (vals[r] - g.mean) * (vals[r] - g.mean);
      }
      g.stddev = std::sqrt(ss / static_cast<double>(count));
      if (!(g.stddev > 1e-12 * std::max(1.0, std::abs(g.mean)))) {
        g.constant = true;
        d.warnings.push_back("numerical column '" + col.name +
                             "' is constant on the train split; embedded as zeros");
      }
    } else {
      std::set<std::string> cats;
      for (const auto& row : raw.rows) cats.insert(row[c]);
      g.categories.assign(cats.begin(), cats.end());
      g.width = g.categories.size();
    }
    if (col.name == schema.protected_attribute) d.protected_group = d.feature_map.size();
    dim += g.width;
    d.feature_map.push_back(std::move(g));
  }
  const bool bias = schema.bias_feature;
  const std::size_t p = dim + (bias ? 1 : 0);

  // Column index per feature group, aligned with feature_map.
  std::vector<std::size_t> source_col;
  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const auto k = schema.columns[c].kind;
    if (k == ColumnKind::numerical || k == ColumnKind::categorical) source_col.push_back(c);
  }

  Matrix X(n, p);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t gi = 0; gi < d.feature_map.size(); ++gi) {
      const auto& g = d.feature_map[gi];
      const auto& tok = raw.rows[r][source_col[gi]];
      if (g.kind == ColumnKind::numerical) {
        double v = 0.0;
        parse_double(tok, v);
        X(r, g.offset) = g.constant ? 0.0 : (v - g.mean) / g.stddev;
      } else {
        const auto it = std::lower_bound(g.categories.begin(), g.categories.end(), tok);
        X(r, g.offset + static_cast<std::size_t>(it - g.categories.begin())) = 1.0;
      }
    }
    if (bias) X(r, p - 1) = 1.0;
  }
  d.X = std::move(X);

  const std::size_t label_col = schema.label_column();
  d.y.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    d.y[r] = raw.rows[r][label_col] == schema.positive_label ? 1.0 : 0.0;
  }
  if (d.protected_feature().width < 2) {
    throw ConfigError("protected attribute '" + schema.protected_attribute +
                      "' has fewer than two values; it cannot be swapped");
  }
  return d;
}

Dataset prepare(const RawDataset& raw, const Schema& schema) {
  if (raw.size() == 0) throw DatasetError("no rows left after dropping incomplete ones");
  const auto tags = split(raw.size(), schema.split_ratios, schema.split_seed);
  return preprocess(raw, schema, tags);
}

Vector flipped_labels(const Dataset& d, std::span<const std::size_t> indices) {
  Vector y = d.y;
  for (auto i : indices) {
    if (i >= d.size()) throw DatasetError("flip index " + std::to_string(i) + " out of range");
    if (d.splits[i] != Split::train) {
      throw DatasetError("flip index " + std::to_string(i) + " is not a train row");
    }
    y[i] = 1.0 - y[i];
  }
  return y;
}

Dataset flip_labels(const Dataset& d, std::span<const std::size_t> indices) {
  Dataset out = d;
  out.y = flipped_labels(d, indices);
  return out;
}

}  // namespace cfd::data
