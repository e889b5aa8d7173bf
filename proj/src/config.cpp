#include "decokan/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace decokan {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

Dim parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error("config: '" + key + "' expects an integer, got '" +
                       value + "'");
  }
}

double parse_float(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error("config: '" + key + "' expects a number, got '" + value +
                       "'");
  }
}

std::vector<std::string> split_csv_list(const std::string& value) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : value) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& value) {
  if (key == "data.csv") cfg.data_csv = value;
  else if (key == "data.timestamp_column") cfg.timestamp_column = value;
  else if (key == "data.value_columns") cfg.value_columns = split_csv_list(value);
  else if (key == "data.delimiter") {
    if (value.size() != 1)
      throw config_error("config: 'data.delimiter' expects one character");
    cfg.delimiter = value[0];
  } else if (key == "data.split.train") {
    cfg.split_train = parse_int(key, value);
    cfg.use_ratio_split = false;
  } else if (key == "data.split.val") {
    cfg.split_val = parse_int(key, value);
    cfg.use_ratio_split = false;
  } else if (key == "data.split.test") {
    cfg.split_test = parse_int(key, value);
    cfg.use_ratio_split = false;
  } else if (key == "data.split.ratio") {
    const auto parts = split_csv_list(value);
    if (parts.size() != 3)
      throw config_error("config: 'data.split.ratio' expects three values");
    cfg.ratio_train = parse_float(key, parts[0]);
    cfg.ratio_val = parse_float(key, parts[1]);
    cfg.ratio_test = parse_float(key, parts[2]);
    cfg.use_ratio_split = true;
  } else if (key == "model.lookback") cfg.model.lookback = parse_int(key, value);
  else if (key == "model.horizon") cfg.model.horizon = parse_int(key, value);
  else if (key == "model.channels") cfg.model.channels = parse_int(key, value);
  else if (key == "model.wavelet") cfg.model.wavelet = value;
  else if (key == "model.level") cfg.model.level = parse_int(key, value);
  else if (key == "model.patch") cfg.model.patch = parse_int(key, value);
  else if (key == "model.stride") cfg.model.stride = parse_int(key, value);
  else if (key == "model.embed_dim") cfg.model.embed_dim = parse_int(key, value);
  else if (key == "model.tfactor") cfg.model.tfactor = parse_int(key, value);
  else if (key == "model.dfactor") cfg.model.dfactor = parse_int(key, value);
  else if (key == "model.dropout") cfg.model.dropout = parse_float(key, value);
  else if (key == "model.grid_size") cfg.model.grid_size = parse_int(key, value);
  else if (key == "model.order") cfg.model.order = parse_int(key, value);
  else if (key == "model.ablation") cfg.model.ablation = ablation_from_string(value);
  else if (key == "train.lr") cfg.train_opts.lr = parse_float(key, value);
  else if (key == "train.batch") cfg.train_opts.batch = parse_int(key, value);
  else if (key == "train.epochs") cfg.train_opts.epochs = parse_int(key, value);
  else if (key == "train.gamma") cfg.train_opts.gamma = parse_float(key, value);
  else if (key == "train.patience") cfg.train_opts.patience = parse_int(key, value);
  else if (key == "train.seed")
    cfg.train_opts.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "train.verbose")
    cfg.train_opts.verbose = value == "1" || value == "true";
  else if (key == "output.dir") cfg.output_dir = value;
  else
    throw config_error("config: unknown key '" + key + "'");
}

RunConfig parse_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw config_error("config: cannot open '" + path + "'");
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config: line " + std::to_string(line_no) +
                         " is not 'key = value'");
    apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

std::vector<std::string> validate_ranges(const RunConfig& cfg) {
  std::vector<std::string> warnings;
  auto warn = [&](const std::string& text) { warnings.push_back("warning: " + text); };
  const ModelConfig& m = cfg.model;

  auto in = [](Dim v, std::initializer_list<Dim> set) {
    return std::find(set.begin(), set.end(), v) != set.end();
  };
  if (!in(m.lookback, {96, 512}))
    warn("model.lookback " + std::to_string(m.lookback) +
         " outside the documented settings {96, 512}");
  if (!in(m.horizon, {24, 48, 96, 168, 192, 336, 720}))
    warn("model.horizon " + std::to_string(m.horizon) +
         " outside the documented settings");
  if (m.wavelet != "db2" && m.wavelet != "db4")
    warn("model.wavelet '" + m.wavelet + "' outside {db2, db4}");
  if (m.level < 1 || m.level > 3)
    warn("model.level " + std::to_string(m.level) + " outside 1..3");
  if (!in(m.patch, {8, 16, 48}))
    warn("model.patch " + std::to_string(m.patch) + " outside {8, 16, 48}");
  if (!in(m.stride, {4, 8, 24}))
    warn("model.stride " + std::to_string(m.stride) + " outside {4, 8, 24}");
  if (!in(m.embed_dim, {64, 128, 256}))
    warn("model.embed_dim " + std::to_string(m.embed_dim) +
         " outside {64, 128, 256}");
  if (m.tfactor < 2 || m.tfactor > 6)
    warn("model.tfactor " + std::to_string(m.tfactor) + " outside 2..6");
  if (m.dfactor < 2 || m.dfactor > 8)
    warn("model.dfactor " + std::to_string(m.dfactor) + " outside 2..8");
  if (m.dropout < 0.0 || m.dropout > 0.4)
    warn("model.dropout outside 0.0..0.4");
  if (m.grid_size != 5) warn("model.grid_size differs from the default 5");
  if (m.order != 3) warn("model.order differs from the default 3");
  if (!in(cfg.train_opts.batch, {4, 8, 16, 32, 64, 128}))
    warn("train.batch " + std::to_string(cfg.train_opts.batch) +
         " outside {4, 8, 16, 32, 64, 128}");
  if (cfg.train_opts.lr < 1e-4 || cfg.train_opts.lr > 1e-3)
    warn("train.lr outside 1e-4..1e-3");
  if (!in(cfg.train_opts.epochs, {30, 50}))
    warn("train.epochs " + std::to_string(cfg.train_opts.epochs) +
         " outside {30, 50}");
  return warnings;
}

TimeSeriesDataset load_dataset(const RunConfig& cfg) {
  if (cfg.data_csv.empty())
    throw config_error("config: 'data.csv' is required but missing");
  CsvSchema schema;
  schema.timestamp_column = cfg.timestamp_column;
  schema.value_columns = cfg.value_columns;
  schema.delimiter = cfg.delimiter;
  TimeSeriesDataset ds = load_csv(cfg.data_csv, schema);
  if (cfg.use_ratio_split)
    apply_split_ratios(ds, cfg.ratio_train, cfg.ratio_val, cfg.ratio_test);
  else
    apply_split_sizes(ds, cfg.split_train, cfg.split_val, cfg.split_test);
  return ds;
}

std::string run_config_text(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "data.csv = " << cfg.data_csv << '\n';
  if (!cfg.timestamp_column.empty())
    os << "data.timestamp_column = " << cfg.timestamp_column << '\n';
  if (cfg.use_ratio_split)
    os << "data.split.ratio = " << cfg.ratio_train << ',' << cfg.ratio_val
       << ',' << cfg.ratio_test << '\n';
  else
    os << "data.split.train = " << cfg.split_train << "\ndata.split.val = "
       << cfg.split_val << "\ndata.split.test = " << cfg.split_test << '\n';
  os << "model.lookback = " << cfg.model.lookback << '\n'
     << "model.horizon = " << cfg.model.horizon << '\n'
     << "model.channels = " << cfg.model.channels << '\n'
     << "model.wavelet = " << cfg.model.wavelet << '\n'
     << "model.level = " << cfg.model.level << '\n'
     << "model.patch = " << cfg.model.patch << '\n'
     << "model.stride = " << cfg.model.stride << '\n'
     << "model.embed_dim = " << cfg.model.embed_dim << '\n'
     << "model.tfactor = " << cfg.model.tfactor << '\n'
     << "model.dfactor = " << cfg.model.dfactor << '\n'
     << "model.dropout = " << cfg.model.dropout << '\n'
     << "model.grid_size = " << cfg.model.grid_size << '\n'
     << "model.order = " << cfg.model.order << '\n'
     << "model.ablation = " << ablation_to_string(cfg.model.ablation) << '\n'
     << "train.lr = " << cfg.train_opts.lr << '\n'
     << "train.batch = " << cfg.train_opts.batch << '\n'
     << "train.epochs = " << cfg.train_opts.epochs << '\n'
     << "train.gamma = " << cfg.train_opts.gamma << '\n'
     << "train.patience = " << cfg.train_opts.patience << '\n'
     << "train.seed = " << cfg.train_opts.seed << '\n'
     << "output.dir = " << cfg.output_dir << '\n';
  return os.str();
}

}  // namespace decokan
