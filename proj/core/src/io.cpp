#include "latentflow/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "latentflow/errors.hpp"

namespace latentflow {

namespace {

using json = nlohmann::json;

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail_at(const std::string& source, std::size_t line, const std::string& what) {
  throw DataError(source + ":" + std::to_string(line) + ": " + what);
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool is_missing(std::string_view text) { return text.empty() || text == "NA"; }

// Reads a header plus data rows; calls row(fields, line_number) per non-empty line.
template <typename RowFn>
void read_csv(std::istream& is, const std::string& source, std::vector<std::string>& header,
              RowFn row) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(is, line)) {
    ++number;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    if (header.empty()) {
      for (auto field : split(view)) header.emplace_back(trim(field));
      continue;
    }
    auto fields = split(view);
    for (auto& f : fields) f = trim(f);
    if (fields.size() != header.size()) {
      fail_at(source, number, "expected " + std::to_string(header.size()) + " fields, found " +
                                  std::to_string(fields.size()));
    }
    row(fields, number);
  }
  if (header.empty()) throw DataError(source + ": empty file");
}

void expect_header(const std::vector<std::string>& header, const std::vector<std::string>& want,
                   const std::string& source) {
  if (header != want) {
    std::string expected;
    for (const auto& w : want) expected += (expected.empty() ? "" : ",") + w;
    throw DataError(source + ":1: expected header '" + expected + "'");
  }
}

std::ifstream open_input(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw DataError("cannot open " + file.string());
  return is;
}

std::int64_t hour_of_day(std::int64_t epoch_hours) { return ((epoch_hours % 24) + 24) % 24; }

}  // namespace

std::int64_t parse_hour_timestamp(std::string_view text) {
  auto bad = [&](const std::string& why) -> DataError {
    return DataError("timestamp '" + std::string(text) + "': " + why);
  };
  std::string_view s = text;
  if (s.ends_with('Z')) {
    s.remove_suffix(1);
  } else if (s.ends_with("+00:00")) {
    s.remove_suffix(6);
  }
  // YYYY-MM-DDTHH:MM or YYYY-MM-DDTHH:MM:SS
  if ((s.size() != 16 && s.size() != 19) || s[4] != '-' || s[7] != '-' ||
      (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || (s.size() == 19 && s[16] != ':')) {
    throw bad("expected YYYY-MM-DDTHH:MM[:SS][Z]");
  }
  int y = 0;
  unsigned mo = 0;
  unsigned d = 0;
  int h = 0;
  int mi = 0;
  int sec = 0;
  if (!parse_number(s.substr(0, 4), y) || !parse_number(s.substr(5, 2), mo) ||
      !parse_number(s.substr(8, 2), d) || !parse_number(s.substr(11, 2), h) ||
      !parse_number(s.substr(14, 2), mi) || (s.size() == 19 && !parse_number(s.substr(17, 2), sec))) {
    throw bad("non-numeric field");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{mo},
                                        std::chrono::day{d}};
  if (!ymd.ok() || h < 0 || h > 23) throw bad("not a valid date and hour");
  if (mi != 0 || sec != 0) throw bad("not aligned to a full hour");
  const std::chrono::sys_days days{ymd};
  return static_cast<std::int64_t>(days.time_since_epoch().count()) * 24 + h;
}

std::string format_hour_timestamp(std::int64_t epoch_hours) {
  const std::int64_t day = (epoch_hours - hour_of_day(epoch_hours)) / 24;
  const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:00:00Z", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hour_of_day(epoch_hours)));
  return buf;
}

FeedTable read_feeds(std::istream& is, const std::string& source) {
  struct Row {
    std::string station;
    std::int64_t hour;
    FeedPanel::Fill fill;
  };
  std::vector<std::string> header;
  std::vector<Row> rows;
  std::map<std::int64_t, std::string> hour_text;
  std::map<std::string, std::optional<std::int64_t>> capacity;
  std::set<std::pair<std::string, std::int64_t>> seen;

  read_csv(is, source, header, [&](const std::vector<std::string_view>& f, std::size_t line) {
    if (rows.empty() && seen.empty()) {
      if (header != std::vector<std::string>{"station_id", "timestamp", "fill"} &&
          header != std::vector<std::string>{"station_id", "timestamp", "fill", "capacity"}) {
        throw DataError(source + ":1: expected header 'station_id,timestamp,fill[,capacity]'");
      }
    }
    if (f[0].empty()) fail_at(source, line, "empty station_id");
    std::int64_t hour = 0;
    try {
      hour = parse_hour_timestamp(f[1]);
    } catch (const DataError& e) {
      fail_at(source, line, e.what());
    }
    Row row{std::string(f[0]), hour, std::nullopt};
    if (!is_missing(f[2])) {
      std::int64_t v = 0;
      if (!parse_number(f[2], v)) {
        fail_at(source, line, "fill '" + std::string(f[2]) + "' is not an integer");
      }
      if (v < 0) fail_at(source, line, "fill " + std::string(f[2]) + " is negative");
      row.fill = v;
    }
    if (f.size() == 4 && !is_missing(f[3])) {
      std::int64_t c = 0;
      if (!parse_number(f[3], c) || c <= 0) {
        fail_at(source, line, "capacity '" + std::string(f[3]) + "' is not a positive integer");
      }
      auto& slot = capacity[row.station];
      if (slot && *slot != c) {
        fail_at(source, line, "capacity of station " + row.station + " changes");
      }
      slot = c;
    } else {
      capacity.try_emplace(row.station);
    }
    if (!seen.emplace(row.station, hour).second) {
      fail_at(source, line, "duplicate row for station " + row.station + " at " + std::string(f[1]));
    }
    hour_text.try_emplace(hour, std::string(f[1]));
    rows.push_back(std::move(row));
  });
  if (rows.empty()) throw DataError(source + ": no data rows");

  FeedTable table;
  table.has_capacity_column = header.size() == 4;
  for (const auto& [id, cap] : capacity) {
    table.station_ids.push_back(id);
    table.capacity.push_back(cap);
  }
  for (const auto& [hour, text] : hour_text) {
    table.hours.push_back(hour);
    table.timestamps.push_back(text);
  }
  const std::size_t n = table.station_ids.size();
  const std::size_t g = table.hours.size();
  table.fills.assign(n * g, std::nullopt);
  std::vector<std::uint8_t> present(n * g, 0);
  for (const auto& row : rows) {
    const auto i = static_cast<std::size_t>(
        std::lower_bound(table.station_ids.begin(), table.station_ids.end(), row.station) -
        table.station_ids.begin());
    const auto h = static_cast<std::size_t>(
        std::lower_bound(table.hours.begin(), table.hours.end(), row.hour) - table.hours.begin());
    table.fills[i * g + h] = row.fill;
    present[i * g + h] = 1;
  }
  std::string gaps;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> missing;
    for (std::size_t h = 0; h < g; ++h) {
      if (!present[i * g + h]) missing.push_back(table.timestamps[h]);
    }
    if (missing.empty()) continue;
    gaps += "\n  station " + table.station_ids[i] + ": " + std::to_string(missing.size()) +
            " missing (";
    for (std::size_t k = 0; k < std::min<std::size_t>(missing.size(), 5); ++k) {
      gaps += (k ? ", " : "") + missing[k];
    }
    gaps += missing.size() > 5 ? ", ...)" : ")";
  }
  if (!gaps.empty()) throw DataError(source + ": gaps in the timestamp grid:" + gaps);
  return table;
}

FeedTable read_feeds(const std::filesystem::path& file) {
  auto is = open_input(file);
  return read_feeds(is, file.string());
}

void write_feeds(std::ostream& os, const FeedTable& table) {
  os << "station_id,timestamp,fill" << (table.has_capacity_column ? ",capacity" : "") << '\n';
  for (int i = 0; i < table.num_stations(); ++i) {
    const auto& cap = table.capacity[static_cast<std::size_t>(i)];
    for (int h = 0; h < table.num_hours(); ++h) {
      os << table.station_ids[static_cast<std::size_t>(i)] << ','
         << table.timestamps[static_cast<std::size_t>(h)] << ',';
      if (const auto v = table.fill(i, h)) os << *v;
      if (table.has_capacity_column) {
        os << ',';
        if (cap) os << *cap;
      }
      os << '\n';
    }
  }
}

std::vector<int> select_timepoints(const FeedTable& table, std::optional<int> hour) {
  std::vector<int> positions;
  for (int p = 1; p < table.num_hours(); ++p) {
    const auto cur = table.hours[static_cast<std::size_t>(p)];
    if (table.hours[static_cast<std::size_t>(p - 1)] != cur - 1) continue;
    if (hour && hour_of_day(cur) != *hour % 24) continue;
    positions.push_back(p);
  }
  return positions;
}

FeedPanel build_panel(const FeedTable& table, const std::vector<int>& positions) {
  if (positions.empty()) throw DataError("no timepoints selected from the feeds");
  std::vector<std::string> labels;
  for (int p : positions) labels.push_back(table.timestamps[static_cast<std::size_t>(p)]);
  std::vector<FeedPanel::Fill> prev;
  std::vector<FeedPanel::Fill> curr;
  for (int i = 0; i < table.num_stations(); ++i) {
    for (int p : positions) {
      prev.push_back(table.fill(i, p - 1));
      curr.push_back(table.fill(i, p));
    }
  }
  return FeedPanel::from_fills(table.station_ids, std::move(labels), std::move(prev),
                               std::move(curr));
}

std::vector<CovariateRecord> read_covariates(std::istream& is, const std::string& source) {
  std::vector<std::string> header;
  std::vector<CovariateRecord> records;
  std::set<std::tuple<std::string, std::optional<std::int64_t>, std::string, std::string>> keys;
  std::map<std::string, Scope> scope_of;
  read_csv(is, source, header, [&](const std::vector<std::string_view>& f, std::size_t line) {
    if (records.empty()) {
      expect_header(header, {"scope", "timestamp", "station", "station_to", "name", "value"},
                    source);
    }
    CovariateRecord r;
    r.line = line;
    try {
      r.scope = parse_scope(f[0]);
    } catch (const ConfigError& e) {
      fail_at(source, line, e.what());
    }
    if (!f[1].empty()) {
      try {
        r.hour = parse_hour_timestamp(f[1]);
      } catch (const DataError& e) {
        fail_at(source, line, e.what());
      }
    }
    r.station = std::string(f[2]);
    r.station_to = std::string(f[3]);
    r.name = std::string(f[4]);
    if (r.name.empty()) fail_at(source, line, "empty covariate name");
    if (!parse_number(f[5], r.value) || !std::isfinite(r.value)) {
      fail_at(source, line, "value '" + std::string(f[5]) + "' is not a finite number");
    }
    switch (r.scope) {
      case Scope::time:
        if (!r.hour || !r.station.empty() || !r.station_to.empty()) {
          fail_at(source, line, "time covariates need a timestamp and no stations");
        }
        break;
      case Scope::station_out:
      case Scope::station_in:
        if (r.station.empty() || !r.station_to.empty()) {
          fail_at(source, line, "station covariates need station and no station_to");
        }
        break;
      case Scope::dyadic:
        if (r.station.empty() || r.station_to.empty()) {
          fail_at(source, line, "dyadic covariates need station and station_to");
        }
        break;
    }
    const auto [it, fresh] = scope_of.try_emplace(r.name, r.scope);
    if (it->second != r.scope) {
      fail_at(source, line, "covariate '" + r.name + "' appears with two scopes");
    }
    if (!keys.emplace(r.name, r.hour, r.station, r.station_to).second) {
      fail_at(source, line, "duplicate value for covariate '" + r.name + "'");
    }
    records.push_back(std::move(r));
  });
  return records;
}

std::vector<CovariateRecord> read_covariates(const std::filesystem::path& file) {
  auto is = open_input(file);
  return read_covariates(is, file.string());
}

void write_covariates(std::ostream& os, const std::vector<CovariateRecord>& records) {
  os << "scope,timestamp,station,station_to,name,value\n";
  os.precision(17);
  for (const auto& r : records) {
    os << to_string(r.scope) << ',' << (r.hour ? format_hour_timestamp(*r.hour) : "") << ','
       << r.station << ',' << r.station_to << ',' << r.name << ',' << r.value << '\n';
  }
}

std::vector<std::pair<std::string, CovariateValues>> assemble_covariates(
    const std::vector<CovariateRecord>& records, const std::vector<std::string>& station_ids,
    const std::vector<std::int64_t>& timepoint_hours) {
  const int n = static_cast<int>(station_ids.size());
  const int t_len = static_cast<int>(timepoint_hours.size());
  std::map<std::string, int> station_index;
  for (int i = 0; i < n; ++i) station_index[station_ids[static_cast<std::size_t>(i)]] = i;
  std::map<std::int64_t, int> time_index;
  for (int t = 0; t < t_len; ++t) time_index[timepoint_hours[static_cast<std::size_t>(t)]] = t;

  struct Pending {
    Scope scope;
    std::optional<bool> time_varying;
    std::vector<const CovariateRecord*> rows;
  };
  std::vector<std::string> order;
  std::map<std::string, Pending> by_name;
  for (const auto& r : records) {
    auto [it, fresh] = by_name.try_emplace(r.name, Pending{r.scope, std::nullopt, {}});
    if (fresh) order.push_back(r.name);
    auto& p = it->second;
    const bool tv = r.hour.has_value();
    if (p.time_varying && *p.time_varying != tv) {
      throw DataError("covariate '" + r.name + "' mixes rows with and without timestamps (line " +
                      std::to_string(r.line) + ")");
    }
    p.time_varying = tv;
    p.rows.push_back(&r);
  }

  auto station_of = [&](const std::string& id, const CovariateRecord& r) {
    const auto it = station_index.find(id);
    if (it == station_index.end()) {
      throw DataError("covariate '" + r.name + "' line " + std::to_string(r.line) +
                      ": unknown station " + id);
    }
    return it->second;
  };

  std::vector<std::pair<std::string, CovariateValues>> out;
  for (const auto& name : order) {
    const auto& p = by_name.at(name);
    const bool tv = *p.time_varying;
    const int per_t = tv ? t_len : 1;
    std::size_t size = 0;
    switch (p.scope) {
      case Scope::time: size = static_cast<std::size_t>(t_len); break;
      case Scope::station_out:
      case Scope::station_in: size = static_cast<std::size_t>(n * per_t); break;
      case Scope::dyadic: size = static_cast<std::size_t>(n * n * per_t); break;
    }
    std::vector<double> values(size, 0.0);
    std::vector<std::uint8_t> filled(size, 0);
    for (const auto* r : p.rows) {
      int t = 0;
      if (tv) {
        const auto it = time_index.find(*r->hour);
        if (it == time_index.end()) continue;  // outside the selected timepoints
        t = it->second;
      }
      std::size_t k = 0;
      switch (p.scope) {
        case Scope::time: k = static_cast<std::size_t>(t); break;
        case Scope::station_out:
        case Scope::station_in:
          k = static_cast<std::size_t>(station_of(r->station, *r) * per_t + t);
          break;
        case Scope::dyadic:
          k = static_cast<std::size_t>(
              (station_of(r->station, *r) * n + station_of(r->station_to, *r)) * per_t + t);
          break;
      }
      values[k] = r->value;
      filled[k] = 1;
    }
    // Dyadic self-routes default to 0 when not given.
    if (p.scope == Scope::dyadic) {
      for (int i = 0; i < n; ++i) {
        for (int t = 0; t < per_t; ++t) filled[static_cast<std::size_t>((i * n + i) * per_t + t)] = 1;
      }
    }
    const auto missing = static_cast<std::size_t>(std::count(filled.begin(), filled.end(), 0));
    if (missing > 0) {
      throw DataError("covariate '" + name + "' has " + std::to_string(missing) +
                      " missing values for the selected stations and timepoints");
    }
    if (p.scope == Scope::time) {
      out.emplace_back(name, CovariateValues::time(std::move(values)));
    } else {
      out.emplace_back(name, CovariateValues(p.scope, n, t_len, tv, std::move(values)));
    }
  }
  return out;
}

TripTensor read_trips(std::istream& is, const std::vector<std::string>& station_ids,
                      const std::vector<std::int64_t>& timepoint_hours, const std::string& source) {
  TripTensor y;
  y.num_stations = static_cast<int>(station_ids.size());
  y.num_timepoints = static_cast<int>(timepoint_hours.size());
  y.counts.assign(static_cast<std::size_t>(y.num_stations) * y.num_stations * y.num_timepoints, 0);
  std::map<std::string, int> station_index;
  for (int i = 0; i < y.num_stations; ++i) station_index[station_ids[static_cast<std::size_t>(i)]] = i;
  std::map<std::int64_t, int> time_index;
  for (int t = 0; t < y.num_timepoints; ++t) time_index[timepoint_hours[static_cast<std::size_t>(t)]] = t;
  std::vector<std::uint8_t> seen(y.counts.size(), 0);
  std::vector<std::string> header;
  bool checked = false;
  read_csv(is, source, header, [&](const std::vector<std::string_view>& f, std::size_t line) {
    if (!checked) {
      expect_header(header, {"origin", "destination", "timestamp", "count"}, source);
      checked = true;
    }
    auto station = [&](std::string_view id) {
      const auto it = station_index.find(std::string(id));
      if (it == station_index.end()) fail_at(source, line, "unknown station " + std::string(id));
      return it->second;
    };
    const int i = station(f[0]);
    const int j = station(f[1]);
    std::int64_t hour = 0;
    try {
      hour = parse_hour_timestamp(f[2]);
    } catch (const DataError& e) {
      fail_at(source, line, e.what());
    }
    int count = 0;
    if (!parse_number(f[3], count) || count < 0) {
      fail_at(source, line, "count '" + std::string(f[3]) + "' is not a non-negative integer");
    }
    const auto it = time_index.find(hour);
    if (it == time_index.end()) return;
    const std::size_t k = y.index(i, j, it->second);
    if (seen[k]) fail_at(source, line, "duplicate trip count");
    seen[k] = 1;
    y.counts[k] = count;
  });
  return y;
}

TripTensor read_trips(const std::filesystem::path& file,
                      const std::vector<std::string>& station_ids,
                      const std::vector<std::int64_t>& timepoint_hours) {
  auto is = open_input(file);
  return read_trips(is, station_ids, timepoint_hours, file.string());
}

// ---------------------------------------------------------------------------
// Run configuration

void RunConfig::validate() const {
  if (hour && (*hour < 1 || *hour > 24)) {
    throw ConfigError("hour must be in 1..24, got " + std::to_string(*hour));
  }
  em.validate();
  for (const auto& s : smooth) {
    if (s.covariate.empty()) throw ConfigError("smooth term without covariate");
    if (s.spec.num_basis < 4) {
      throw ConfigError("smooth term '" + s.spec.name + "' needs at least 4 basis functions");
    }
    if (s.range_given && !(s.spec.lo < s.spec.hi)) {
      throw ConfigError("smooth term '" + s.spec.name + "' has an empty range");
    }
  }
  if (distance) {
    if (!(distance->alpha > 0.0)) throw ConfigError("distance alpha must be positive");
    for (double a : distance->alpha_grid) {
      if (!(a > 0.0)) throw ConfigError("distance alpha grid values must be positive");
    }
  }
  if (bands.draws < 100) throw ConfigError("bands.draws must be at least 100");
  if (bands.grid_points < 2) throw ConfigError("bands.grid_points must be at least 2");
  if (!(bands.level > 0.0 && bands.level < 1.0)) throw ConfigError("bands.level must be in (0, 1)");
}

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read_key(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text) {
  RunConfig cfg;
  try {
    const json root = json::parse(json_text);
    check_keys(root,
               {"model", "hour", "linear", "smooth", "distance", "derived", "em", "bands",
                "output_dir"},
               "configuration");
    if (root.contains("model")) cfg.model_kind = parse_model_kind(root.at("model").get<std::string>());
    if (root.contains("hour")) cfg.hour = root.at("hour").get<int>();
    if (root.contains("linear")) cfg.linear = root.at("linear").get<std::vector<std::string>>();
    if (root.contains("smooth")) {
      for (const auto& s : root.at("smooth")) {
        check_keys(s, {"covariate", "name", "num_basis", "kind", "lower", "upper"}, "smooth");
        SmoothConfig sc;
        sc.covariate = s.at("covariate").get<std::string>();
        sc.spec.name = s.value("name", sc.covariate);
        sc.spec.num_basis = s.value("num_basis", 10);
        const std::string kind = s.value("kind", std::string("open"));
        if (kind == "open") {
          sc.spec.kind = SplineKind::open;
        } else if (kind == "cyclic") {
          sc.spec.kind = SplineKind::cyclic;
        } else {
          throw ConfigError("smooth kind must be 'open' or 'cyclic', got '" + kind + "'");
        }
        if (s.contains("lower") != s.contains("upper")) {
          throw ConfigError("smooth term '" + sc.spec.name + "': give both lower and upper");
        }
        if (s.contains("lower")) {
          sc.spec.lo = s.at("lower").get<double>();
          sc.spec.hi = s.at("upper").get<double>();
          sc.range_given = true;
        }
        cfg.smooth.push_back(std::move(sc));
      }
    }
    if (root.contains("distance")) {
      const auto& d = root.at("distance");
      check_keys(d, {"covariate", "name", "alpha", "alpha_grid"}, "distance");
      DistanceConfig dc;
      read_key(d, "covariate", dc.covariate);
      read_key(d, "name", dc.name);
      read_key(d, "alpha", dc.alpha);
      read_key(d, "alpha_grid", dc.alpha_grid);
      cfg.distance = dc;
    }
    if (root.contains("derived")) {
      const auto& d = root.at("derived");
      check_keys(d, {"seasonal", "weekdays", "nobikes", "noboxes"}, "derived");
      read_key(d, "seasonal", cfg.derived.seasonal);
      read_key(d, "weekdays", cfg.derived.weekdays);
      read_key(d, "nobikes", cfg.derived.nobikes);
      read_key(d, "noboxes", cfg.derived.noboxes);
    }
    if (root.contains("em")) {
      const auto& e = root.at("em");
      check_keys(e,
                 {"epsilon", "max_outer", "lambda_min", "lambda_max", "divergence_tol", "seed",
                  "inner"},
                 "em");
      read_key(e, "epsilon", cfg.em.epsilon);
      read_key(e, "max_outer", cfg.em.max_outer);
      read_key(e, "lambda_min", cfg.em.lambda_min);
      read_key(e, "lambda_max", cfg.em.lambda_max);
      read_key(e, "divergence_tol", cfg.em.divergence_tol);
      read_key(e, "seed", cfg.em.seed);
      if (e.contains("inner")) {
        const auto& in = e.at("inner");
        check_keys(in, {"grad_tol", "max_iter", "c1", "c2", "max_line_search"}, "em.inner");
        read_key(in, "grad_tol", cfg.em.inner.grad_tol);
        read_key(in, "max_iter", cfg.em.inner.max_iter);
        read_key(in, "c1", cfg.em.inner.c1);
        read_key(in, "c2", cfg.em.inner.c2);
        read_key(in, "max_line_search", cfg.em.inner.max_line_search);
      }
    }
    if (root.contains("bands")) {
      const auto& b = root.at("bands");
      check_keys(b, {"draws", "grid_points", "level"}, "bands");
      read_key(b, "draws", cfg.bands.draws);
      read_key(b, "grid_points", cfg.bands.grid_points);
      read_key(b, "level", cfg.bands.level);
    }
    read_key(root, "output_dir", cfg.output_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("configuration: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open configuration " + file.string());
  std::stringstream buffer;
  buffer << is.rdbuf();
  try {
    return parse_run_config(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

std::string run_config_json(const RunConfig& cfg) {
  json root;
  root["model"] = std::string(to_string(cfg.model_kind));
  if (cfg.hour) root["hour"] = *cfg.hour;
  if (cfg.linear) root["linear"] = *cfg.linear;
  root["smooth"] = json::array();
  for (const auto& s : cfg.smooth) {
    json j{{"covariate", s.covariate},
           {"name", s.spec.name},
           {"num_basis", s.spec.num_basis},
           {"kind", s.spec.kind == SplineKind::open ? "open" : "cyclic"}};
    if (s.range_given) {
      j["lower"] = s.spec.lo;
      j["upper"] = s.spec.hi;
    }
    root["smooth"].push_back(j);
  }
  if (cfg.distance) {
    root["distance"] = {{"covariate", cfg.distance->covariate},
                        {"name", cfg.distance->name},
                        {"alpha", cfg.distance->alpha},
                        {"alpha_grid", cfg.distance->alpha_grid}};
  }
  root["derived"] = {{"seasonal", cfg.derived.seasonal},
                     {"weekdays", cfg.derived.weekdays},
                     {"nobikes", cfg.derived.nobikes},
                     {"noboxes", cfg.derived.noboxes}};
  root["em"] = {{"epsilon", cfg.em.epsilon},
                {"max_outer", cfg.em.max_outer},
                {"lambda_min", cfg.em.lambda_min},
                {"lambda_max", cfg.em.lambda_max},
                {"divergence_tol", cfg.em.divergence_tol},
                {"seed", cfg.em.seed},
                {"inner",
                 {{"grad_tol", cfg.em.inner.grad_tol},
                  {"max_iter", cfg.em.inner.max_iter},
                  {"c1", cfg.em.inner.c1},
                  {"c2", cfg.em.inner.c2},
                  {"max_line_search", cfg.em.inner.max_line_search}}}};
  root["bands"] = {{"draws", cfg.bands.draws},
                   {"grid_points", cfg.bands.grid_points},
                   {"level", cfg.bands.level}};
  root["output_dir"] = cfg.output_dir;
  return root.dump(2);
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

std::vector<std::pair<std::string, CovariateValues>> derived_covariates(const Dataset& data,
                                                                        const RunConfig& cfg) {
  std::vector<std::pair<std::string, CovariateValues>> out;
  const auto& hours = data.timepoint_hours;
  const int n = data.panel.num_stations();
  const int t_len = static_cast<int>(hours.size());
  using namespace std::chrono;
  if (cfg.derived.seasonal) {
    std::vector<double> seas;
    for (auto h : hours) {
      const sys_days day{days{(h - hour_of_day(h)) / 24}};
      const year_month_day ymd{day};
      const sys_days jan1{ymd.year() / January / 1};
      const double len = ymd.year().is_leap() ? 366.0 : 365.0;
      seas.push_back(static_cast<double>((day - jan1).count()) / len);
    }
    out.emplace_back("seas", CovariateValues::time(std::move(seas)));
  }
  if (cfg.derived.weekdays) {
    static const char* names[] = {"tue", "wed", "thu", "fri", "sat", "sun"};
    static const unsigned iso[] = {2, 3, 4, 5, 6, 7};
    for (int k = 0; k < 6; ++k) {
      std::vector<double> dummy;
      for (auto h : hours) {
        const weekday wd{sys_days{days{(h - hour_of_day(h)) / 24}}};
        dummy.push_back(wd.iso_encoding() == iso[k] ? 1.0 : 0.0);
      }
      out.emplace_back(names[k], CovariateValues::time(std::move(dummy)));
    }
  }
  auto indicator = [&](auto pred) {
    std::vector<double> v(static_cast<std::size_t>(n * t_len), 0.0);
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < t_len; ++t) {
        const auto prev = data.panel.prev_fill(i, t);
        const auto curr = data.panel.fill(i, t);
        if (prev && curr && pred(i, *prev) && pred(i, *curr)) {
          v[static_cast<std::size_t>(i * t_len + t)] = 1.0;
        }
      }
    }
    return v;
  };
  if (cfg.derived.nobikes) {
    out.emplace_back("nobikes",
                     CovariateValues::station(Scope::station_out, n, t_len,
                                              indicator([](int, std::int64_t f) { return f == 0; })));
  }
  return out;
}

}  // namespace

void rebuild_covariates(Dataset& data, const std::vector<CovariateRecord>& records,
                        const RunConfig& cfg, std::optional<double> alpha) {
  const int n = data.panel.num_stations();
  const int t_len = data.panel.num_timepoints();
  data.warnings.clear();
  auto available = assemble_covariates(records, data.feeds.station_ids, data.timepoint_hours);
  for (auto& d : derived_covariates(data, cfg)) available.push_back(std::move(d));
  if (cfg.derived.noboxes) {
    const bool all = std::all_of(data.feeds.capacity.begin(), data.feeds.capacity.end(),
                                 [](const auto& c) { return c.has_value(); });
    if (!all) {
      data.warnings.push_back("noboxes omitted: capacity column missing or incomplete");
    } else {
      std::vector<double> v(static_cast<std::size_t>(n * t_len), 0.0);
      for (int i = 0; i < n; ++i) {
        const auto cap = *data.feeds.capacity[static_cast<std::size_t>(i)];
        for (int t = 0; t < t_len; ++t) {
          const auto prev = data.panel.prev_fill(i, t);
          const auto curr = data.panel.fill(i, t);
          if (prev && curr && *prev >= cap && *curr >= cap) v[static_cast<std::size_t>(i * t_len + t)] = 1.0;
        }
      }
      available.emplace_back("noboxes", CovariateValues::station(Scope::station_in, n, t_len, std::move(v)));
    }
  }

  std::map<std::string, const CovariateValues*> lookup;
  std::vector<std::string> names;
  for (const auto& [name, values] : available) {
    if (!lookup.emplace(name, &values).second) {
      throw DataError("covariate '" + name + "' is defined twice (derived and in the file)");
    }
    names.push_back(name);
  }
  auto find = [&](const std::string& name) -> const CovariateValues& {
    const auto it = lookup.find(name);
    if (it == lookup.end()) {
      std::string list;
      for (const auto& nm : names) list += (list.empty() ? "" : ", ") + nm;
      throw ConfigError("unknown covariate '" + name + "' (available: " +
                        (list.empty() ? "none" : list) + ")");
    }
    return *it->second;
  };

  auto set = std::make_unique<CovariateSet>(n, t_len);
  std::set<std::string> used;
  std::vector<std::pair<SmoothTermSpec, const CovariateValues*>> smooths;
  for (const auto& s : cfg.smooth) {
    const auto& values = find(s.covariate);
    SmoothTermSpec spec = s.spec;
    if (!s.range_given) {
      if (s.covariate == "seas") {
        spec.lo = 0.0;
        spec.hi = 1.0;
      } else {
        const auto v = values.values();
        spec.lo = *std::min_element(v.begin(), v.end());
        spec.hi = *std::max_element(v.begin(), v.end());
        if (!(spec.lo < spec.hi)) {
          throw ConfigError("smooth term '" + spec.name + "': covariate is constant");
        }
      }
    }
    smooths.emplace_back(spec, &values);
    used.insert(s.covariate);
  }
  std::optional<std::pair<std::string, const CovariateValues*>> distance;
  if (cfg.distance) {
    distance.emplace(cfg.distance->name, &find(cfg.distance->covariate));
    used.insert(cfg.distance->covariate);
  }
  std::vector<std::string> linear;
  if (cfg.linear) {
    linear = *cfg.linear;
  } else {
    for (const auto& nm : names) {
      if (!used.count(nm)) linear.push_back(nm);
    }
  }
  for (const auto& nm : linear) set->add_linear(nm, find(nm));
  if (distance) {
    set->add_distance_transform(distance->first, *distance->second,
                                alpha.value_or(cfg.distance->alpha));
  }
  for (const auto& [spec, values] : smooths) set->add_smooth(spec, *values);
  data.covariates = std::move(set);
}

Dataset ingest(const FeedTable& feeds, const std::vector<CovariateRecord>& covariates,
               const RunConfig& cfg, std::optional<double> alpha) {
  cfg.validate();
  Dataset data;
  data.feeds = feeds;
  data.positions = select_timepoints(feeds, cfg.hour);
  if (data.positions.empty()) {
    throw DataError(cfg.hour ? "no timestamps at hour " + std::to_string(*cfg.hour) +
                                   " with a preceding hour in the feeds"
                             : std::string("feeds contain no consecutive hours"));
  }
  for (int p : data.positions) data.timepoint_hours.push_back(feeds.hours[static_cast<std::size_t>(p)]);
  data.panel = build_panel(feeds, data.positions);
  rebuild_covariates(data, covariates, cfg, alpha);
  return data;
}

Dataset ingest(const std::filesystem::path& feeds,
               const std::optional<std::filesystem::path>& covariates, const RunConfig& cfg) {
  const auto table = read_feeds(feeds);
  std::vector<CovariateRecord> records;
  if (covariates) records = read_covariates(*covariates);
  return ingest(table, records, cfg);
}

}  // namespace latentflow
