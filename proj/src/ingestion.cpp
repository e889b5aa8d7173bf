#include "decokan/ingestion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace decokan {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool is_missing(const std::string& s) {
  if (s.empty()) return true;
  std::string lower;
  for (char c : s) lower.push_back(static_cast<char>(std::tolower(c)));
  return lower == "na" || lower == "nan" || lower == "null";
}

// Days since 1970-01-01 for a civil date (Howard Hinnant's algorithm).
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy =
      static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return static_cast<std::int64_t>(era) * 146097 +
         static_cast<std::int64_t>(doe) - 719468;
}

}  // namespace

std::int64_t parse_timestamp(const std::string& text) {
  int y, mo, d, h, mi, s;
  if (std::sscanf(text.c_str(), "%d-%d-%d%*1[ T]%d:%d:%d", &y, &mo, &d, &h,
                  &mi, &s) == 6)
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
  if (std::sscanf(text.c_str(), "%d-%d-%d%*1[ T]%d:%d", &y, &mo, &d, &h, &mi) == 5)
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60;
  if (std::sscanf(text.c_str(), "%d-%d-%d", &y, &mo, &d) == 3)
    return days_from_civil(y, mo, d) * 86400;
  // plain epoch seconds
  char* end = nullptr;
  const long long v = std::strtoll(text.c_str(), &end, 10);
  if (end != text.c_str() && *end == '\0') return v;
  throw io_error("ingestion: unparseable timestamp '" + text + "'");
}

std::int64_t TimeSeriesDataset::frequency_seconds() const {
  if (timestamps.size() < 2) return 0;
  std::vector<std::int64_t> deltas;
  deltas.reserve(timestamps.size() - 1);
  for (std::size_t i = 1; i < timestamps.size(); ++i)
    deltas.push_back(timestamps[i] - timestamps[i - 1]);
  std::nth_element(deltas.begin(), deltas.begin() + deltas.size() / 2,
                   deltas.end());
  return deltas[deltas.size() / 2];
}

TimeSeriesDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream is(path);
  if (!is) throw io_error("ingestion: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(is, line))
    throw io_error("ingestion: '" + path + "' is empty (no header row)");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_line(line, schema.delimiter);
  if (header.size() < 2)
    throw io_error("ingestion: header needs a timestamp and >= 1 value column");

  const std::string ts_name =
      schema.timestamp_column.empty() ? header[0] : schema.timestamp_column;
  std::size_t ts_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == ts_name) ts_col = i;
  if (ts_col == header.size())
    throw io_error("ingestion: timestamp column '" + ts_name + "' not found");

  std::vector<std::size_t> value_cols;
  std::vector<std::string> names;
  if (schema.value_columns.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (i != ts_col) {
        value_cols.push_back(i);
        names.push_back(header[i]);
      }
  } else {
    for (const auto& want : schema.value_columns) {
      bool found = false;
      for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == want) {
          value_cols.push_back(i);
          names.push_back(want);
          found = true;
        }
      if (!found)
        throw io_error("ingestion: value column '" + want + "' not found");
    }
  }

  TimeSeriesDataset ds;
  const double kMissing = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::int64_t> timestamps;
  std::vector<std::vector<double>> rows;  // row-major raw values
  std::vector<std::size_t> bad_rows;
  std::size_t row_number = 1;  // header was row 1
  std::size_t missing_cells = 0;

  while (std::getline(is, line)) {
    ++row_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_line(line, schema.delimiter);
    if (fields.size() != header.size()) {
      bad_rows.push_back(row_number);
      continue;
    }
    std::int64_t ts = 0;
    std::vector<double> row(value_cols.size(), kMissing);
    bool bad = false;
    try {
      ts = parse_timestamp(fields[ts_col]);
    } catch (const io_error&) {
      bad = true;
    }
    for (std::size_t j = 0; j < value_cols.size() && !bad; ++j) {
      const std::string& cell = fields[value_cols[j]];
      if (is_missing(cell)) {
        ++missing_cells;
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0' || !std::isfinite(v)) {
        bad = true;
        break;
      }
      row[j] = v;
    }
    if (bad) {
      bad_rows.push_back(row_number);
      continue;
    }
    timestamps.push_back(ts);
    rows.push_back(std::move(row));
  }

  const std::size_t total = rows.size() + bad_rows.size();
  if (total == 0) throw io_error("ingestion: '" + path + "' has no data rows");
  if (bad_rows.size() * 100 > total) {
    std::ostringstream msg;
    msg << "ingestion: " << bad_rows.size() << " unparseable rows (> 1% of "
        << total << "); first offenders at lines";
    for (std::size_t i = 0; i < std::min<std::size_t>(bad_rows.size(), 10); ++i)
      msg << ' ' << bad_rows[i];
    throw io_error(msg.str());
  }
  if (!bad_rows.empty()) {
    std::ostringstream note;
    note << "skipped " << bad_rows.size() << " unparseable rows (lines";
    for (std::size_t i = 0; i < std::min<std::size_t>(bad_rows.size(), 10); ++i)
      note << ' ' << bad_rows[i];
    note << ")";
    ds.log.push_back(note.str());
  }

  for (std::size_t i = 1; i < timestamps.size(); ++i)
    if (timestamps[i] <= timestamps[i - 1])
      throw io_error("ingestion: timestamps not strictly increasing at data row " +
                     std::to_string(i + 1));

  // Forward-fill then back-fill per channel; count the repairs.
  std::size_t filled = 0;
  for (std::size_t j = 0; j < names.size(); ++j) {
    double last = kMissing;
    for (auto& row : rows) {
      if (std::isnan(row[j])) {
        if (!std::isnan(last)) {
          row[j] = last;
          ++filled;
        }
      } else {
        last = row[j];
      }
    }
    double next = kMissing;
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
      if (std::isnan((*it)[j])) {
        if (!std::isnan(next)) {
          (*it)[j] = next;
          ++filled;
        }
      } else {
        next = (*it)[j];
      }
    }
  }
  if (filled > 0)
    ds.log.push_back("filled " + std::to_string(filled) +
                     " missing cells (forward then backward)");

  // Drop all-missing and constant columns.
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < names.size(); ++j) {
    if (std::isnan(rows[0][j])) {
      ds.log.push_back("warning: dropped all-missing column '" + names[j] + "'");
      continue;
    }
    bool constant = true;
    for (const auto& row : rows)
      if (row[j] != rows[0][j]) {
        constant = false;
        break;
      }
    if (constant) {
      ds.log.push_back("warning: dropped constant column '" + names[j] + "'");
      continue;
    }
    keep.push_back(j);
  }
  if (keep.empty())
    throw io_error("ingestion: no usable value columns in '" + path + "'");

  const Dim R = static_cast<Dim>(rows.size());
  const Dim C = static_cast<Dim>(keep.size());
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(R * C));
  for (const auto& row : rows)
    for (std::size_t j : keep) flat.push_back(row[j]);
  ds.values = Tensor::from_vector({R, C}, std::move(flat));
  for (std::size_t j : keep) ds.channel_names.push_back(names[j]);
  ds.timestamps = std::move(timestamps);
  return ds;
}

namespace {

void fit_scaler(TimeSeriesDataset& ds) {
  const Dim C = ds.channels();
  const Dim n = ds.train_size;
  ds.scaler.mean.assign(static_cast<std::size_t>(C), 0.0);
  ds.scaler.std.assign(static_cast<std::size_t>(C), 1.0);
  if (n == 0) return;
  const auto v = ds.values.values();
  for (Dim c = 0; c < C; ++c) {
    double mu = 0;
    for (Dim t = 0; t < n; ++t) mu += v[static_cast<std::size_t>(t * C + c)];
    mu /= static_cast<double>(n);
    double var = 0;
    for (Dim t = 0; t < n; ++t) {
      const double d = v[static_cast<std::size_t>(t * C + c)] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    if (var < 1e-24)
      throw value_error("scaler: channel '" +
                        ds.channel_names[static_cast<std::size_t>(c)] +
                        "' is constant on the train split");
    ds.scaler.mean[static_cast<std::size_t>(c)] = mu;
    ds.scaler.std[static_cast<std::size_t>(c)] = std::sqrt(var);
  }
}

}  // namespace

void apply_split_sizes(TimeSeriesDataset& ds, Dim train, Dim val, Dim test) {
  if (train == 0 && val == 0 && test == 0) {  // deferred split
    ds.train_size = ds.val_size = ds.test_size = 0;
    ds.scaler = {};
    return;
  }
  if (train < 1) throw config_error("split: train size must be >= 1");
  if (val < 0 || test < 0) throw config_error("split: negative split size");
  if (train + val + test > ds.rows())
    throw config_error("split: sizes (" + std::to_string(train) + ", " +
                       std::to_string(val) + ", " + std::to_string(test) +
                       ") oversubscribe " + std::to_string(ds.rows()) + " rows");
  if (val == 0 || test == 0)
    ds.log.push_back("warning: empty validation/test split");
  ds.train_size = train;
  ds.val_size = val;
  ds.test_size = test;
  fit_scaler(ds);
}

void apply_split_ratios(TimeSeriesDataset& ds, double train, double val,
                        double test) {
  if (train <= 0 || val < 0 || test < 0 || train + val + test > 1.0 + 1e-9)
    throw config_error("split: ratios must be nonnegative and sum to <= 1");
  const double n = static_cast<double>(ds.rows());
  const Dim tr = static_cast<Dim>(std::floor(train * n));
  const Dim va = static_cast<Dim>(std::floor(val * n));
  Dim te = static_cast<Dim>(std::floor(test * n));
  if (std::fabs(train + val + test - 1.0) < 1e-9) te = ds.rows() - tr - va;
  apply_split_sizes(ds, tr, va, te);
}

TimeSeriesDataset dataset_from_values(Tensor values,
                                      std::vector<std::string> channel_names,
                                      Dim train, Dim val, Dim test) {
  if (values.rank() != 2)
    throw shape_error("dataset_from_values: expected (rows, channels)");
  TimeSeriesDataset ds;
  ds.values = std::move(values);
  if (channel_names.empty())
    for (Dim c = 0; c < ds.values.dim(1); ++c)
      channel_names.push_back("ch" + std::to_string(c));
  if (static_cast<Dim>(channel_names.size()) != ds.values.dim(1))
    throw shape_error("dataset_from_values: channel name count mismatch");
  ds.channel_names = std::move(channel_names);
  ds.timestamps.resize(static_cast<std::size_t>(ds.rows()));
  for (Dim t = 0; t < ds.rows(); ++t)
    ds.timestamps[static_cast<std::size_t>(t)] = t * 86400;
  apply_split_sizes(ds, train, val, test);
  return ds;
}

}  // namespace decokan
