#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "calib/predictions_io.hpp"

using namespace calib;
namespace fs = std::filesystem;

namespace {

struct TempFile {
  fs::path path;
  TempFile(const std::string& name, const std::string& contents)
      : path(fs::temp_directory_path() / ("calib_io_" + name)) {
    std::ofstream(path, std::ios::binary) << contents;
  }
  ~TempFile() { fs::remove(path); }
};

template <typename E>
std::size_t error_line(const fs::path& p, LogFormat f) {
  try {
    load_predictions(p, f);
  } catch (const E& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("jsonl rows become records") {
  TempFile f("basic.jsonl", "{\"probs\": [0.7, 0.3], \"label\": 0}\n\n{\"probs\":[0.1,0.2,0.7],\"label\":1}\n");
  CHECK_THROWS_AS(load_predictions(f.path, LogFormat::JSONL), MalformedRowError);

  TempFile g("two.jsonl", "{\"probs\": [0.7, 0.3], \"label\": 0}\n\n{\"probs\":[0.2,0.8],\"label\":1}\n");
  const auto rs = load_predictions(g.path, LogFormat::JSONL);
  REQUIRE(rs.size() == 2);
  CHECK(rs[0].predicted_class == 0);
  CHECK(rs[0].confidence == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(rs[0].true_class == 0);
  CHECK(rs[1].predicted_class == 1);
}

TEST_CASE("csv rows become records") {
  TempFile f("basic.csv", "p0,p1,label\r\n0.7,0.3,0\r\n0.25, 0.75 ,1\r\n");
  const auto rs = load_predictions(f.path, LogFormat::CSV);
  REQUIRE(rs.size() == 2);
  CHECK(rs[0].confidence == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(rs[1].predicted_class == 1);
  CHECK(rs[1].probs == std::vector<double>{0.25, 0.75});
}

TEST_CASE("near-normalized rows are renormalized") {
  TempFile f("renorm.jsonl", "{\"probs\": [0.5000001, 0.5], \"label\": 1}\n");
  const auto rs = load_predictions(f.path, LogFormat::JSONL);
  REQUIRE(rs.size() == 1);
  CHECK(std::abs(rs[0].probs[0] + rs[0].probs[1] - 1.0) < 1e-9);
  CHECK(rs[0].predicted_class == 0);
}

TEST_CASE("row errors name the offending line") {
  TempFile sum("sum.jsonl", "{\"probs\": [0.5, 0.5], \"label\": 1}\n{\"probs\": [0.9, 0.9], \"label\": 0}\n");
  CHECK(error_line<ProbabilitySumError>(sum.path, LogFormat::JSONL) == 2);
  try {
    load_predictions(sum.path, LogFormat::JSONL);
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  TempFile label("label.csv", "p0,p1,label\n0.5,0.5,0\n0.5,0.5,2\n");
  CHECK(error_line<LabelRangeError>(label.path, LogFormat::CSV) == 3);

  TempFile bad("bad.jsonl", "{\"probs\": [0.5, 0.5], \"label\": 0}\nnot json\n");
  CHECK(error_line<MalformedRowError>(bad.path, LogFormat::JSONL) == 2);

  TempFile negative("neg.csv", "p0,p1,label\n-0.5,1.5,0\n");
  CHECK(error_line<MalformedRowError>(negative.path, LogFormat::CSV) == 2);

  TempFile header("header.csv", "a,b,label\n0.5,0.5,0\n");
  CHECK(error_line<MalformedRowError>(header.path, LogFormat::CSV) == 1);

  TempFile width("width.csv", "p0,p1,label\n0.5,0.5\n");
  CHECK(error_line<MalformedRowError>(width.path, LogFormat::CSV) == 2);

  TempFile single("single.jsonl", "{\"probs\": [1.0], \"label\": 0}\n");
  CHECK(error_line<MalformedRowError>(single.path, LogFormat::JSONL) == 1);
}

TEST_CASE("error kinds are distinct") {
  CHECK_FALSE((std::is_base_of_v<ProbabilitySumError, LabelRangeError>));
  CHECK_FALSE((std::is_base_of_v<MalformedRowError, ProbabilitySumError>));
  CHECK((std::is_base_of_v<PredictionLogError, MalformedRowError>));
}

TEST_CASE("missing file is an I/O error") {
  CHECK_THROWS_AS(load_predictions("/nonexistent/dir/preds.jsonl", LogFormat::JSONL), IoError);
}

TEST_CASE("format names") {
  CHECK(parse_log_format("csv") == LogFormat::CSV);
  CHECK(to_string(LogFormat::JSONL) == "jsonl");
  CHECK_THROWS_AS(parse_log_format("xml"), std::domain_error);
}
