#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "decokan/ingestion.hpp"

using namespace decokan;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / "decokan_ingest_test";
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string write(const std::string& name, const std::string& content) {
    const auto file = path / name;
    std::ofstream os(file);
    os << content;
    return file.string();
  }
};

bool log_contains(const TimeSeriesDataset& ds, const std::string& needle) {
  for (const auto& line : ds.log)
    if (line.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("toy csv loads into rows x channels") {
  TempDir dir;
  std::string csv = "date,price,volume\n";
  for (int i = 0; i < 10; ++i)
    csv += "2024-01-" + std::string(i < 9 ? "0" : "") + std::to_string(i + 1) +
           "," + std::to_string(100 + i) + "," + std::to_string(50 - i) + "\n";
  auto ds = load_csv(dir.write("toy.csv", csv));
  CHECK(ds.rows() == 10);
  CHECK(ds.channels() == 2);
  CHECK(ds.channel_names == std::vector<std::string>{"price", "volume"});
  CHECK(ds.values.at({0, 0}) == 100.0);
  CHECK(ds.values.at({9, 1}) == 41.0);
  CHECK(ds.frequency_seconds() == 86400);
}

TEST_CASE("timestamp formats: date, datetime, epoch") {
  CHECK(parse_timestamp("1970-01-01") == 0);
  CHECK(parse_timestamp("1970-01-02") == 86400);
  CHECK(parse_timestamp("2016-07-01 02:00:00") ==
        parse_timestamp("2016-07-01") + 7200);
  CHECK(parse_timestamp("2016-07-01T02:30") ==
        parse_timestamp("2016-07-01") + 9000);
  CHECK(parse_timestamp("1234567890") == 1234567890);
  CHECK_THROWS_AS(parse_timestamp("yesterday"), io_error);
}

TEST_CASE("missing cells are filled and logged") {
  TempDir dir;
  auto path = dir.write("gap.csv",
                        "date,a,b\n"
                        "2024-01-01,1.0,\n"      // leading missing in b
                        "2024-01-02,,5.0\n"      // forward-fill a
                        "2024-01-03,3.0,6.0\n");
  auto ds = load_csv(path);
  CHECK(ds.values.at({1, 0}) == 1.0);  // forward-filled
  CHECK(ds.values.at({0, 1}) == 5.0);  // back-filled
  CHECK(log_contains(ds, "filled 2 missing cells"));
}

TEST_CASE("constant columns are dropped with a warning") {
  TempDir dir;
  auto path = dir.write("const.csv",
                        "date,flat,ok\n"
                        "2024-01-01,7,1\n"
                        "2024-01-02,7,2\n"
                        "2024-01-03,7,4\n");
  auto ds = load_csv(path);
  CHECK(ds.channels() == 1);
  CHECK(ds.channel_names == std::vector<std::string>{"ok"});
  CHECK(log_contains(ds, "dropped constant column 'flat'"));
}

TEST_CASE("non-monotone timestamps are rejected") {
  TempDir dir;
  auto path = dir.write("bad_ts.csv",
                        "date,a\n"
                        "2024-01-02,1\n"
                        "2024-01-01,2\n");
  CHECK_THROWS_AS(load_csv(path), io_error);
}

TEST_CASE("unparseable rows: skipped under 1%, error above with row numbers") {
  TempDir dir;
  std::string big = "date,a\n";
  for (int i = 0; i < 200; ++i)
    big += std::to_string(1700000000 + i * 60) + "," + std::to_string(i) + "\n";
  // one garbage row in 200 -> 0.5%, skipped
  std::string with_one = big;
  with_one.insert(with_one.find("\n", 8) + 1, "garbage,row\n");
  auto ds = load_csv(dir.write("one_bad.csv", with_one));
  CHECK(ds.rows() == 200);
  CHECK(log_contains(ds, "skipped 1 unparseable rows"));

  std::string many = "date,a\n2024-01-01,1\n2024-01-02,oops\n2024-01-03,3\n";
  try {
    load_csv(dir.write("many_bad.csv", many));
    FAIL("expected io_error");
  } catch (const io_error& e) {
    CHECK(std::string(e.what()).find("lines 3") != std::string::npos);
  }
}

TEST_CASE("splits") {
  auto values = Tensor::zeros({100, 2});
  for (Dim t = 0; t < 100; ++t) {
    values.mutable_values()[static_cast<std::size_t>(t * 2)] = static_cast<double>(t);
    values.mutable_values()[static_cast<std::size_t>(t * 2 + 1)] =
        static_cast<double>(t % 7);
  }

  SUBCASE("explicit sizes and chronological integrity") {
    auto ds = dataset_from_values(values.clone(), {"a", "b"}, 70, 10, 20);
    CHECK(ds.train_size == 70);
    // train rows end before val rows, which end before test rows
    const auto t_train = ds.timestamps[69];
    const auto t_val = ds.timestamps[70];
    const auto t_test = ds.timestamps[80];
    CHECK(t_train < t_val);
    CHECK(t_val < t_test);
  }
  SUBCASE("ratio splits reproduce (70, 10, 20) on length 100") {
    auto ds = dataset_from_values(values.clone(), {"a", "b"}, 0, 0, 0);
    apply_split_ratios(ds, 0.7, 0.1, 0.2);
    CHECK(ds.train_size == 70);
    CHECK(ds.val_size == 10);
    CHECK(ds.test_size == 20);
  }
  SUBCASE("empty val and test allowed with a warning") {
    auto ds = dataset_from_values(values.clone(), {"a", "b"}, 100, 0, 0);
    CHECK(log_contains(ds, "empty validation/test split"));
  }
  SUBCASE("oversubscription") {
    auto ds = dataset_from_values(values.clone(), {"a", "b"}, 50, 10, 20);
    CHECK_THROWS_AS(apply_split_sizes(ds, 80, 20, 20), config_error);
  }
  SUBCASE("scaler is fit on the train split only") {
    auto ds = dataset_from_values(values.clone(), {"a", "b"}, 70, 10, 20);
    double mu = 0;
    for (Dim t = 0; t < 70; ++t) mu += static_cast<double>(t);
    mu /= 70.0;
    CHECK(ds.scaler.mean[0] == doctest::Approx(mu).epsilon(1e-12));
    // changing test rows must not affect the scaler
    auto tweaked = values.clone();
    for (Dim t = 80; t < 100; ++t)
      tweaked.mutable_values()[static_cast<std::size_t>(t * 2)] = 1e6;
    auto ds2 = dataset_from_values(tweaked, {"a", "b"}, 70, 10, 20);
    CHECK(ds2.scaler.mean[0] == ds.scaler.mean[0]);
    CHECK(ds2.scaler.std[0] == ds.scaler.std[0]);
  }
  SUBCASE("constant train channel is rejected") {
    auto flat = Tensor::zeros({100, 2});
    for (Dim t = 0; t < 100; ++t) {
      flat.mutable_values()[static_cast<std::size_t>(t * 2)] = 3.0;  // constant in train
      flat.mutable_values()[static_cast<std::size_t>(t * 2 + 1)] =
          static_cast<double>(t);
    }
    CHECK_THROWS_AS(dataset_from_values(flat, {"a", "b"}, 70, 10, 20),
                    value_error);
  }
}

TEST_CASE("reloading yields bitwise-identical datasets") {
  TempDir dir;
  std::string csv = "date,x,y\n";
  for (int i = 0; i < 50; ++i)
    csv += std::to_string(1700000000 + i * 3600) + "," +
           std::to_string(0.1 * i) + "," + std::to_string(std::sin(i * 0.3)) +
           "\n";
  auto path = dir.write("reload.csv", csv);
  auto a = load_csv(path);
  auto b = load_csv(path);
  REQUIRE(a.rows() == b.rows());
  CHECK(std::equal(a.values.values().begin(), a.values.values().end(),
                   b.values.values().begin()));
  CHECK(a.timestamps == b.timestamps);
}

TEST_CASE("benchmark-sized splits apply cleanly") {
  // ETT-hourly shape: 7 variates, (8545, 2881, 2881)
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unit(-1, 1);
  {
    auto values = Tensor::zeros({14307, 7});
    for (auto& v : values.mutable_values()) v = unit(rng);
    auto ds = dataset_from_values(values, {}, 8545, 2881, 2881);
    CHECK(ds.train_size == 8545);
    CHECK(ds.val_size == 2881);
    CHECK(ds.test_size == 2881);
    CHECK(ds.channels() == 7);
  }
  // BTC shape: (6099, 4269, 1219) with val > test
  {
    auto values = Tensor::zeros({11587, 3});
    for (auto& v : values.mutable_values()) v = unit(rng);
    auto ds = dataset_from_values(values, {}, 6099, 4269, 1219);
    CHECK(ds.train_size == 6099);
    CHECK(ds.val_size == 4269);
    CHECK(ds.test_size == 1219);
  }
}
