#include "dynforest/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "dynforest/csv.hpp"
#include "json.hpp"

namespace dynforest {

namespace csv {

namespace {
std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}
}  // namespace

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

Table read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  Table table;
  std::string line;
  bool first = true;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_line(line);
    if (first) {
      table.header = std::move(fields);
      first = false;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw ValidationError(path + ", line " + std::to_string(line_no) + ": expected " +
                            std::to_string(table.header.size()) + " fields, got " +
                            std::to_string(fields.size()));
    }
    table.rows.push_back(std::move(fields));
  }
  if (first) throw ValidationError(path + ": empty file (missing header)");
  return table;
}

void write_file(const std::string& path, const Table& table) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open file for writing: " + path);
  for (std::size_t i = 0; i < table.header.size(); ++i)
    out << (i ? "," : "") << table.header[i];
  out << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  if (!out) throw ValidationError("write failed: " + path);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

double parse_double(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw ValidationError(context + ": not a number: '" + s + "'");
  return v;
}

long parse_long(const std::string& s, const std::string& context) {
  long v = 0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw ValidationError(context + ": not an integer: '" + s + "'");
  return v;
}

}  // namespace csv

using nlohmann::json;

const std::string& Schema::predictor_name(int p) const {
  if (p < n_covariates()) return covariates[p].name;
  return markers[p - n_covariates()];
}

int Schema::predictor_index(const std::string& name) const {
  for (int p = 0; p < n_predictors(); ++p)
    if (predictor_name(p) == name) return p;
  return -1;
}

void Schema::validate() const {
  if (n_causes < 1) throw ValidationError("schema: n_causes must be >= 1");
  std::set<std::string> names;
  for (const auto& cov : covariates) {
    if (!names.insert(cov.name).second)
      throw ValidationError("schema: duplicate predictor name '" + cov.name + "'");
    if (cov.type == CovariateType::Categorical && cov.levels.size() < 2)
      throw ValidationError("schema: categorical covariate '" + cov.name +
                            "' needs at least 2 levels");
  }
  for (const auto& m : markers)
    if (!names.insert(m).second)
      throw ValidationError("schema: duplicate predictor name '" + m + "'");
  if (!groups.empty()) {
    // A group map must cover every predictor exactly once.
    for (const auto& name : names)
      if (!groups.count(name))
        throw ValidationError("schema: group map missing predictor '" + name + "'");
    for (const auto& [name, group] : groups)
      if (!names.count(name))
        throw ValidationError("schema: group map references unknown predictor '" + name + "'");
  }
}

std::string Schema::to_json_string() const {
  json j;
  j["n_causes"] = n_causes;
  j["covariates"] = json::array();
  for (const auto& cov : covariates) {
    json c;
    c["name"] = cov.name;
    c["type"] = cov.type == CovariateType::Continuous ? "continuous" : "categorical";
    if (cov.type == CovariateType::Categorical) c["levels"] = cov.levels;
    j["covariates"].push_back(c);
  }
  j["markers"] = markers;
  if (!groups.empty()) j["groups"] = groups;
  return j.dump(2);
}

Schema Schema::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("schema: invalid JSON: ") + e.what());
  }
  Schema schema;
  try {
    schema.n_causes = j.at("n_causes").get<int>();
    for (const auto& c : j.at("covariates")) {
      CovariateInfo cov;
      cov.name = c.at("name").get<std::string>();
      const auto type = c.at("type").get<std::string>();
      if (type == "continuous") {
        cov.type = CovariateType::Continuous;
      } else if (type == "categorical") {
        cov.type = CovariateType::Categorical;
        cov.levels = c.at("levels").get<std::vector<std::string>>();
      } else {
        throw ValidationError("schema: unknown covariate type '" + type + "'");
      }
      schema.covariates.push_back(std::move(cov));
    }
    schema.markers = j.at("markers").get<std::vector<std::string>>();
    if (j.contains("groups"))
      schema.groups = j.at("groups").get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("schema: ") + e.what());
  }
  schema.validate();
  return schema;
}

Schema Schema::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open schema file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json_string(buffer.str());
}

MarkerSeries MarkerSeries::truncated_before(double s) const {
  Eigen::Index n = 0;
  while (n < times.size() && times[n] < s) ++n;
  MarkerSeries out;
  out.times = times.head(n);
  out.values = values.head(n);
  return out;
}

Eigen::VectorXd LongitudinalDataset::event_times() const {
  Eigen::VectorXd t(n_subjects());
  for (int i = 0; i < n_subjects(); ++i) t[i] = subjects[i].event_time;
  return t;
}

std::vector<int> LongitudinalDataset::causes() const {
  std::vector<int> c(subjects.size());
  for (std::size_t i = 0; i < subjects.size(); ++i) c[i] = subjects[i].cause;
  return c;
}

double LongitudinalDataset::pooled_time_min() const {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& per_subject : series)
    for (const auto& s : per_subject)
      if (!s.empty()) lo = std::min(lo, s.times[0]);
  return lo;
}

double LongitudinalDataset::pooled_time_max() const {
  double hi = -std::numeric_limits<double>::infinity();
  for (const auto& per_subject : series)
    for (const auto& s : per_subject)
      if (!s.empty()) hi = std::max(hi, s.times[s.times.size() - 1]);
  return hi;
}

std::vector<double> LongitudinalDataset::pooled_times(int marker) const {
  std::vector<double> out;
  for (const auto& per_subject : series) {
    const auto& s = per_subject[marker];
    for (Eigen::Index j = 0; j < s.size(); ++j) out.push_back(s.times[j]);
  }
  return out;
}

void LongitudinalDataset::validate() const {
  schema.validate();
  if (series.size() != subjects.size())
    throw ValidationError("dataset: marker series count does not match subject count");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& subj = subjects[i];
    if (!ids.insert(subj.id).second)
      throw ValidationError("dataset: duplicate subject id '" + subj.id + "'");
    if (!(subj.event_time >= 0.0))
      throw ValidationError("subject '" + subj.id + "': event_time must be >= 0");
    if (subj.cause < 0 || subj.cause > schema.n_causes)
      throw ValidationError("subject '" + subj.id + "': cause " + std::to_string(subj.cause) +
                            " outside {0,...," + std::to_string(schema.n_causes) + "}");
    if (subj.covariates.size() != schema.n_covariates())
      throw ValidationError("subject '" + subj.id + "': expected " +
                            std::to_string(schema.n_covariates()) + " covariates");
    if (series[i].size() != static_cast<std::size_t>(schema.n_markers()))
      throw ValidationError("subject '" + subj.id + "': expected one series per marker");
    for (int m = 0; m < schema.n_markers(); ++m) {
      const auto& s = series[i][m];
      if (s.times.size() != s.values.size())
        throw ValidationError("subject '" + subj.id + "', marker '" + schema.markers[m] +
                              "': times/values length mismatch");
      for (Eigen::Index j = 0; j < s.size(); ++j) {
        if (j > 0 && !(s.times[j] > s.times[j - 1]))
          throw ValidationError("subject '" + subj.id + "', marker '" + schema.markers[m] +
                                "': measurement times not strictly increasing at t=" +
                                csv::format_double(s.times[j]));
        if (s.times[j] > subj.event_time)
          throw ValidationError("subject '" + subj.id + "', marker '" + schema.markers[m] +
                                "': measurement at t=" + csv::format_double(s.times[j]) +
                                " after observed time " + csv::format_double(subj.event_time));
        if (!std::isfinite(s.values[j]))
          throw ValidationError("subject '" + subj.id + "', marker '" + schema.markers[m] +
                                "': non-finite value");
      }
    }
  }
}

LongitudinalDataset load_dataset(const std::string& fixed_path, const std::string& long_path,
                                 const Schema& schema) {
  schema.validate();
  const auto fixed = csv::read_file(fixed_path);
  const auto longt = csv::read_file(long_path);

  for (const auto& col : {std::string("id"), std::string("event_time"), std::string("cause")})
    if (fixed.column(col) < 0)
      throw ValidationError(fixed_path + ": missing column '" + col + "'");
  std::vector<int> cov_cols;
  for (const auto& cov : schema.covariates) {
    const int c = fixed.column(cov.name);
    if (c < 0) throw ValidationError(fixed_path + ": missing covariate column '" + cov.name + "'");
    cov_cols.push_back(c);
  }
  for (const auto& col : {std::string("id"), std::string("marker"), std::string("time"),
                          std::string("value")})
    if (longt.column(col) < 0)
      throw ValidationError(long_path + ": missing column '" + col + "'");

  LongitudinalDataset ds;
  ds.schema = schema;
  std::map<std::string, int> index_of;
  const int id_col = fixed.column("id");
  const int time_col = fixed.column("event_time");
  const int cause_col = fixed.column("cause");
  for (std::size_t r = 0; r < fixed.rows.size(); ++r) {
    const auto& row = fixed.rows[r];
    SubjectRecord subj;
    subj.id = row[id_col];
    subj.source_id = subj.id;
    const std::string ctx = fixed_path + ", subject '" + subj.id + "'";
    if (index_of.count(subj.id))
      throw ValidationError(fixed_path + ": duplicate subject id '" + subj.id + "'");
    subj.event_time = csv::parse_double(row[time_col], ctx + ", event_time");
    subj.cause = static_cast<int>(csv::parse_long(row[cause_col], ctx + ", cause"));
    subj.covariates.resize(schema.n_covariates());
    for (int p = 0; p < schema.n_covariates(); ++p) {
      const auto& cell = row[cov_cols[p]];
      if (cell.empty())
        throw ValidationError(ctx + ": missing value for covariate '" +
                              schema.covariates[p].name + "'");
      if (schema.covariates[p].type == CovariateType::Continuous) {
        subj.covariates[p] = csv::parse_double(cell, ctx + ", " + schema.covariates[p].name);
      } else {
        const auto& levels = schema.covariates[p].levels;
        const auto it = std::find(levels.begin(), levels.end(), cell);
        if (it == levels.end())
          throw ValidationError(ctx + ": unknown level '" + cell + "' for covariate '" +
                                schema.covariates[p].name + "'");
        subj.covariates[p] = static_cast<double>(it - levels.begin());
      }
    }
    index_of[subj.id] = static_cast<int>(ds.subjects.size());
    ds.subjects.push_back(std::move(subj));
    ds.series.emplace_back(schema.n_markers());
  }

  // Collect long-format rows, then pack each (subject, marker) series.
  const int lid = longt.column("id");
  const int lmarker = longt.column("marker");
  const int ltime = longt.column("time");
  const int lvalue = longt.column("value");
  std::vector<std::vector<std::vector<std::pair<double, double>>>> buffer(
      ds.subjects.size(), std::vector<std::vector<std::pair<double, double>>>(schema.n_markers()));
  for (std::size_t r = 0; r < longt.rows.size(); ++r) {
    const auto& row = longt.rows[r];
    const std::string ctx = long_path + ", row " + std::to_string(r + 2);
    const auto sit = index_of.find(row[lid]);
    if (sit == index_of.end())
      throw ValidationError(ctx + ": subject '" + row[lid] + "' not present in " + fixed_path);
    int m = -1;
    for (int q = 0; q < schema.n_markers(); ++q)
      if (schema.markers[q] == row[lmarker]) m = q;
    if (m < 0) throw ValidationError(ctx + ": unknown marker '" + row[lmarker] + "'");
    const double t = csv::parse_double(row[ltime], ctx + ", time");
    const double v = csv::parse_double(row[lvalue], ctx + ", value");
    const auto& subj = ds.subjects[sit->second];
    if (t > subj.event_time)
      throw ValidationError(ctx + ": subject '" + subj.id + "' has measurement at t=" +
                            csv::format_double(t) + " after observed time " +
                            csv::format_double(subj.event_time));
    buffer[sit->second][m].emplace_back(t, v);
  }
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    for (int m = 0; m < schema.n_markers(); ++m) {
      auto& obs = buffer[i][m];
      std::sort(obs.begin(), obs.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      for (std::size_t j = 1; j < obs.size(); ++j)
        if (obs[j].first == obs[j - 1].first)
          throw ValidationError("subject '" + ds.subjects[i].id + "', marker '" +
                                ds.schema.markers[m] + "': tied measurement times at t=" +
                                csv::format_double(obs[j].first));
      MarkerSeries s;
      s.times.resize(static_cast<Eigen::Index>(obs.size()));
      s.values.resize(static_cast<Eigen::Index>(obs.size()));
      for (std::size_t j = 0; j < obs.size(); ++j) {
        s.times[j] = obs[j].first;
        s.values[j] = obs[j].second;
      }
      ds.series[i][m] = std::move(s);
    }
  }
  ds.validate();
  return ds;
}

void save_dataset(const LongitudinalDataset& ds, const std::string& fixed_path,
                  const std::string& long_path) {
  csv::Table fixed;
  fixed.header = {"id", "event_time", "cause"};
  for (const auto& cov : ds.schema.covariates) fixed.header.push_back(cov.name);
  for (const auto& subj : ds.subjects) {
    std::vector<std::string> row = {subj.id, csv::format_double(subj.event_time),
                                    std::to_string(subj.cause)};
    for (int p = 0; p < ds.schema.n_covariates(); ++p) {
      if (ds.schema.covariates[p].type == CovariateType::Categorical) {
        row.push_back(ds.schema.covariates[p].levels[static_cast<int>(subj.covariates[p])]);
      } else {
        row.push_back(csv::format_double(subj.covariates[p]));
      }
    }
    fixed.rows.push_back(std::move(row));
  }
  csv::write_file(fixed_path, fixed);

  csv::Table longt;
  longt.header = {"id", "marker", "time", "value"};
  for (int i = 0; i < ds.n_subjects(); ++i) {
    for (int m = 0; m < ds.schema.n_markers(); ++m) {
      const auto& s = ds.series[i][m];
      for (Eigen::Index j = 0; j < s.size(); ++j) {
        longt.rows.push_back({ds.subjects[i].id, ds.schema.markers[m],
                              csv::format_double(s.times[j]), csv::format_double(s.values[j])});
      }
    }
  }
  csv::write_file(long_path, longt);
}

LongitudinalDataset subset(const LongitudinalDataset& ds, const std::vector<int>& indices) {
  LongitudinalDataset out;
  out.schema = ds.schema;
  std::map<int, int> seen;
  for (const int idx : indices) {
    if (idx < 0 || idx >= ds.n_subjects())
      throw ValidationError("subset: unknown subject index " + std::to_string(idx));
    SubjectRecord subj = ds.subjects[idx];
    const int copy = seen[idx]++;
    if (copy > 0) subj.id = subj.id + "#" + std::to_string(copy);
    subj.source_id = ds.subjects[idx].source_id;
    out.subjects.push_back(std::move(subj));
    out.series.push_back(ds.series[idx]);
  }
  return out;
}

std::vector<int> subject_indices_by_id(const LongitudinalDataset& ds,
                                       const std::vector<std::string>& ids) {
  std::map<std::string, int> index_of;
  for (int i = 0; i < ds.n_subjects(); ++i) index_of[ds.subjects[i].id] = i;
  std::vector<int> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = index_of.find(id);
    if (it == index_of.end()) throw ValidationError("subset: unknown subject id '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace dynforest
