#include <doctest.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "invtrans/csv.hpp"
#include "test_util.hpp"

using namespace invtrans;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
  const fs::path dir = fs::temp_directory_path() / "invtrans_csv_test";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out << content;
}

Errc load_code(const fs::path& p) {
  try {
    load_csv(p.string());
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected load_csv to throw");
  return Errc::ParseError;
}

}  // namespace

TEST_CASE("write then load reproduces the dataset exactly") {
  MultiTaskDataset ds;
  ds.p = 3;
  ds.feature_names = std::vector<std::string>{"pressure", "log_flow", "x3"};

  Eigen::MatrixXd x1(3, 3);
  x1 << 0.1, -1.0 / 3.0, 1e-300, 6.02e23, -0.0, 5e-324, 1.7976931348623157e308, 2.5, -17.0;
  Eigen::VectorXd y1(3);
  y1 << 0.3333333333333333, -2.718281828459045, 1e-12;
  ds.tasks.push_back(testutil::labeled_task(1, x1, y1));

  Eigen::MatrixXd x2(2, 3);
  x2 << 1.0, 2.0, 3.0, -4.5, 0.0, 9.75;
  ds.tasks.push_back(testutil::unlabeled_task(2, x2));
  Eigen::VectorXd y2(2);
  y2 << 42.0, -0.125;
  ds.tasks.push_back(testutil::labeled_task(2, x2 * 2.0, y2));

  const fs::path path = test_dir() / "roundtrip.csv";
  write_csv(ds, path.string());
  const MultiTaskDataset back = load_csv(path.string());

  CHECK(back.p == 3);
  REQUIRE(back.feature_names.has_value());
  CHECK(*back.feature_names == *ds.feature_names);
  CHECK_FALSE(back.test_task_id.has_value());  // not part of the file format
  REQUIRE(back.tasks.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.tasks[i].task_id == ds.tasks[i].task_id);
    CHECK(back.tasks[i].labeled() == ds.tasks[i].labeled());
    CHECK(testutil::same(back.tasks[i].features, ds.tasks[i].features));
    if (ds.tasks[i].labeled()) CHECK(testutil::same(*back.tasks[i].targets, *ds.tasks[i].targets));
  }

  // Idempotence at the byte level: writing the loaded dataset reproduces the file.
  const fs::path path2 = test_dir() / "roundtrip2.csv";
  write_csv(back, path2.string());
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("default feature names are x1..xp") {
  MultiTaskDataset ds;
  ds.p = 2;
  Eigen::MatrixXd x(2, 2);
  x << 1.0, 2.0, 3.0, 4.0;
  Eigen::VectorXd y(2);
  y << 1.0, 0.0;
  ds.tasks.push_back(testutil::labeled_task(1, x, y));
  const fs::path path = test_dir() / "names.csv";
  write_csv(ds, path.string());
  CHECK(slurp(path).rfind("task,y,x1,x2\n", 0) == 0);
  const MultiTaskDataset back = load_csv(path.string());
  CHECK(*back.feature_names == std::vector<std::string>{"x1", "x2"});
}

TEST_CASE("partitions keep first-appearance order with interleaved rows") {
  const fs::path path = test_dir() / "interleaved.csv";
  spit(path,
       "task,y,x1\n"
       "2,1.0,0.5\n"
       "1,,0.25\n"
       "1,3.0,0.125\n"
       "2,2.0,0.75\n"
       "1,,0.0625\n");
  const MultiTaskDataset ds = load_csv(path.string());
  REQUIRE(ds.tasks.size() == 3);
  CHECK(ds.tasks[0].task_id == 2);
  CHECK(ds.tasks[0].labeled());
  CHECK(ds.tasks[0].rows() == 2);
  CHECK((*ds.tasks[0].targets)[1] == 2.0);
  CHECK(ds.tasks[1].task_id == 1);
  CHECK_FALSE(ds.tasks[1].labeled());
  CHECK(ds.tasks[1].rows() == 2);
  CHECK(ds.tasks[1].features(1, 0) == 0.0625);
  CHECK(ds.tasks[2].task_id == 1);
  CHECK(ds.tasks[2].labeled());
  CHECK(ds.tasks[2].rows() == 1);
}

TEST_CASE("windows line endings and a missing final newline are tolerated") {
  const fs::path path = test_dir() / "crlf.csv";
  spit(path, "task,y,x1\r\n1,2.5,3.5\r\n1,1.5,0.5\r\n2,1,2\r\n2,0,1");
  const MultiTaskDataset ds = load_csv(path.string());
  REQUIRE(ds.tasks.size() == 2);
  CHECK(ds.tasks[0].features(0, 0) == 3.5);
  CHECK((*ds.tasks[0].targets)[1] == 1.5);
  CHECK(ds.tasks[1].features(1, 0) == 1.0);
}

TEST_CASE("malformed files fail with the expected codes") {
  const fs::path dir = test_dir();

  spit(dir / "empty.csv", "");
  CHECK(load_code(dir / "empty.csv") == Errc::ParseError);

  spit(dir / "header_only.csv", "task,y,x1\n");
  CHECK(load_code(dir / "header_only.csv") == Errc::ParseError);

  spit(dir / "bad_header.csv", "id,y,x1\n1,1.0,2.0\n");
  CHECK(load_code(dir / "bad_header.csv") == Errc::ParseError);

  spit(dir / "no_features.csv", "task,y\n1,1.0\n");
  CHECK(load_code(dir / "no_features.csv") == Errc::ParseError);

  spit(dir / "wide_row.csv", "task,y,x1\n1,1.0,2.0,3.0\n");
  CHECK(load_code(dir / "wide_row.csv") == Errc::InconsistentWidth);

  spit(dir / "narrow_row.csv", "task,y,x1,x2\n1,1.0,2.0\n");
  CHECK(load_code(dir / "narrow_row.csv") == Errc::InconsistentWidth);

  spit(dir / "bad_target.csv", "task,y,x1\n1,abc,2.0\n");
  CHECK(load_code(dir / "bad_target.csv") == Errc::ParseError);

  spit(dir / "bad_feature.csv", "task,y,x1\n1,1.0,xyz\n");
  CHECK(load_code(dir / "bad_feature.csv") == Errc::ParseError);

  spit(dir / "bad_task.csv", "task,y,x1\n1.5,1.0,2.0\n");
  CHECK(load_code(dir / "bad_task.csv") == Errc::ParseError);

  spit(dir / "blank_middle.csv", "task,y,x1\n1,1.0,2.0\n\n1,0.5,1.0\n");
  CHECK(load_code(dir / "blank_middle.csv") == Errc::ParseError);

  CHECK(load_code(dir / "does_not_exist.csv") == Errc::ParseError);
}

TEST_CASE("write refuses non-finite values") {
  MultiTaskDataset ds;
  ds.p = 1;
  Eigen::MatrixXd x(2, 1);
  x << 1.0, std::numeric_limits<double>::quiet_NaN();
  Eigen::VectorXd y(2);
  y << 0.0, 1.0;
  ds.tasks.push_back(testutil::labeled_task(1, x, y));
  try {
    write_csv(ds, (test_dir() / "nan.csv").string());
    FAIL("expected write_csv to throw");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonFiniteValue);
  }
}

TEST_CASE("atomic text writes create directories and leave no temporaries") {
  const fs::path dir = test_dir() / "nested" / "a" / "b";
  const fs::path target = dir / "out.txt";
  fs::remove_all(test_dir() / "nested");

  atomic_write_text(target.string(), "hello\n");
  CHECK(slurp(target) == "hello\n");
  atomic_write_text(target.string(), "replaced\n");
  CHECK(slurp(target) == "replaced\n");

  std::size_t entries = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    (void)e;
    ++entries;
  }
  CHECK(entries == 1);
}

TEST_CASE("format_double round trips assorted values") {
  const double values[] = {0.0,    -0.0,   1.0 / 3.0, 3.141592653589793, 1e-300, 5e-324,
                           1e308,  -42.0,  0.1,       123456789.0,       2.5e-7, -9.999999999999999e22};
  for (double v : values) {
    const std::string s = format_double(v);
    double back = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), back);
    REQUIRE(res.ec == std::errc{});
    CHECK(back == v);
    CHECK(s.find(',') == std::string::npos);
  }
}
