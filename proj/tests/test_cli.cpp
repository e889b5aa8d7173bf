#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() / "decokan_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }

  std::string write(const std::string& name, const std::string& content) {
    std::ofstream os(dir / name);
    os << content;
    return (dir / name).string();
  }

  int run(const std::string& args, const std::string& log_name = "log.txt") {
    const std::string cmd = std::string(DECOKAN_BIN) + " " + args + " >" +
                            (dir / log_name).string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  }

  std::string slurp(const std::string& name) {
    std::ifstream is(dir / name);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }
};

std::string synthetic_csv(int rows) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::ostringstream os;
  os << "date,alpha,beta\n";
  for (int t = 0; t < rows; ++t) {
    const double a = std::sin(2 * M_PI * t / 24.0) + 0.05 * t + noise(rng);
    const double b = std::cos(2 * M_PI * t / 24.0) + noise(rng);
    os << 1600000000 + 86400LL * t << ',' << a << ',' << b << '\n';
  }
  return os.str();
}

std::string base_config(const std::string& csv_path, const std::string& out) {
  std::ostringstream os;
  os << "data.csv = " << csv_path << "\n"
     << "data.split.ratio = 0.7,0.15,0.15\n"
     << "model.lookback = 48\nmodel.horizon = 12\nmodel.wavelet = db4\n"
     << "model.level = 1\nmodel.patch = 8\nmodel.stride = 4\n"
     << "model.embed_dim = 8\nmodel.tfactor = 2\nmodel.dfactor = 2\n"
     << "model.dropout = 0.1\n"
     << "train.lr = 3e-3\ntrain.batch = 16\ntrain.epochs = 4\ntrain.seed = 7\n"
     << "output.dir = " << out << "\n";
  return os.str();
}

// pulls "key=value" out of a train report
double report_value(const std::string& text, const std::string& key) {
  const auto pos = text.find(key + "=");
  REQUIRE(pos != std::string::npos);
  return std::stod(text.substr(pos + key.size() + 1));
}

}  // namespace

TEST_CASE("cli end to end") {
  Sandbox sb;
  sb.write("series.csv", synthetic_csv(400));
  sb.write("run.conf",
           base_config((sb.dir / "series.csv").string(), (sb.dir / "out").string()));
  const std::string cfg = " --config " + (sb.dir / "run.conf").string();

  SUBCASE("prepare prints a dataset summary") {
    CHECK(sb.run("prepare" + cfg) == 0);
    const auto log = sb.slurp("log.txt");
    CHECK(log.find("rows:      400") != std::string::npos);
    CHECK(log.find("channels:  2") != std::string::npos);
  }

  SUBCASE("train, evaluate, forecast, interpret") {
    REQUIRE(sb.run("train" + cfg) == 0);
    CHECK(fs::exists(sb.dir / "out/checkpoint.dkpt"));
    CHECK(fs::exists(sb.dir / "out/train_report.txt"));
    CHECK(fs::exists(sb.dir / "out/loss_curve.tsv"));

    // refuses to clobber without --overwrite
    CHECK(sb.run("train" + cfg) == 2);
    CHECK(sb.run("train" + cfg + " --overwrite") == 0);

    // evaluate reproduces the report's test metrics and adds persistence
    REQUIRE(sb.run("evaluate" + cfg + " --overwrite", "eval.txt") == 0);
    const auto metrics = sb.slurp("out/metrics.tsv");
    CHECK(metrics.find("persistence") != std::string::npos);
    const double report_mse =
        report_value(sb.slurp("out/train_report.txt"), "test_mse");
    std::istringstream ms(metrics);
    std::string line;
    std::getline(ms, line);  // header
    std::getline(ms, line);  // decokan row
    std::istringstream row(line);
    std::string name;
    double horizon, mse, mae;
    row >> name >> horizon >> mse >> mae;
    CHECK(name == "decokan");
    CHECK(mse == doctest::Approx(report_mse).epsilon(1e-15));

    // horizon sweep emits one row per horizon
    REQUIRE(sb.run("evaluate" + cfg + " --horizons 3,6,9,12 --overwrite",
                   "eval2.txt") == 0);
    const auto sweep = sb.slurp("out/metrics.tsv");
    CHECK(std::count(sweep.begin(), sweep.end(), '\n') == 6);  // header+4+persistence

    // forecast writes T rows with the channel header
    REQUIRE(sb.run("forecast" + cfg + " --overwrite", "fc.txt") == 0);
    const auto forecast = sb.slurp("out/forecast.csv");
    CHECK(forecast.find("timestamp,alpha,beta") == 0);
    CHECK(std::count(forecast.begin(), forecast.end(), '\n') == 13);

    // the forecast tracks the generator's phase better than repeating the
    // last observation (channel alpha continues sin + trend past t = 399)
    {
      std::istringstream fc(forecast);
      std::string line;
      std::getline(fc, line);  // header
      double rmse_model = 0, rmse_hold = 0;
      const double last_alpha = std::sin(2 * M_PI * 399 / 24.0) + 0.05 * 399;
      for (int h = 1; h <= 12; ++h) {
        REQUIRE(std::getline(fc, line));
        std::stringstream row(line);
        std::string ts, alpha_s, beta_s;
        std::getline(row, ts, ',');
        std::getline(row, alpha_s, ',');
        std::getline(row, beta_s, ',');
        const double truth = std::sin(2 * M_PI * (399 + h) / 24.0) + 0.05 * (399 + h);
        rmse_model += std::pow(std::stod(alpha_s) - truth, 2);
        rmse_hold += std::pow(last_alpha - truth, 2);
      }
      CHECK(rmse_model < rmse_hold);
    }

    // interpret writes all four artifacts
    REQUIRE(sb.run("interpret" + cfg + " --overwrite", "it.txt") == 0);
    CHECK(fs::exists(sb.dir / "out/prune_stats.txt"));
    CHECK(fs::exists(sb.dir / "out/symbolic_report.tsv"));
    CHECK(fs::exists(sb.dir / "out/symbolic_report.txt"));
    CHECK(fs::exists(sb.dir / "out/edge_curves.tsv"));

    // tau = 0 prunes nothing
    REQUIRE(sb.run("interpret" + cfg + " --tau 0 --overwrite", "it0.txt") == 0);
    CHECK(sb.slurp("out/prune_stats.txt").find("0.00%") != std::string::npos);
  }

  SUBCASE("same seed twice gives identical curves") {
    sb.write("a.conf", base_config((sb.dir / "series.csv").string(),
                                   (sb.dir / "out_a").string()));
    sb.write("b.conf", base_config((sb.dir / "series.csv").string(),
                                   (sb.dir / "out_b").string()));
    REQUIRE(sb.run("train --config " + (sb.dir / "a.conf").string() + " --seed 7") == 0);
    REQUIRE(sb.run("train --config " + (sb.dir / "b.conf").string() + " --seed 7") == 0);
    CHECK(sb.slurp("out_a/loss_curve.tsv") == sb.slurp("out_b/loss_curve.tsv"));
  }

  SUBCASE("error paths and exit codes") {
    // missing data path names the field
    sb.write("nodata.conf", "model.lookback = 48\noutput.dir = x\n");
    CHECK(sb.run("train --config " + (sb.dir / "nodata.conf").string(),
                 "err1.txt") == 2);
    CHECK(sb.slurp("err1.txt").find("data.csv") != std::string::npos);

    // unknown config key
    sb.write("typo.conf", "modle.lookback = 48\n");
    CHECK(sb.run("train --config " + (sb.dir / "typo.conf").string()) == 2);

    // bad checkpoint -> 3
    sb.write("junk.dkpt", "not a checkpoint");
    CHECK(sb.run("evaluate" + cfg + " --checkpoint " +
                 (sb.dir / "junk.dkpt").string()) == 3);

    // too-short forecast input -> 4
    sb.write("short.csv", synthetic_csv(20));
    REQUIRE(sb.run("train" + cfg + " --overwrite") == 0);
    CHECK(sb.run("forecast" + cfg + " --input " + (sb.dir / "short.csv").string() +
                 " --overwrite") == 4);

    // unreadable data csv -> 4
    sb.write("missing.conf", base_config((sb.dir / "absent.csv").string(),
                                         (sb.dir / "outm").string()));
    CHECK(sb.run("train --config " + (sb.dir / "missing.conf").string()) == 4);
  }
}
