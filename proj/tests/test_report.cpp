#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "mpcnn/report.hpp"

using namespace mpcnn;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("csv rendering quotes only what needs quoting") {
  ExperimentReport r;
  r.id = "demo";
  r.columns = {"name", "value"};
  r.add_row({"plain", "1"});
  r.add_row({"with,comma", "2"});
  r.add_row({"with\"quote", "3"});
  std::string csv = to_csv(r);
  CHECK(csv ==
        "name,value\n"
        "plain,1\n"
        "\"with,comma\",2\n"
        "\"with\"\"quote\",3\n");
}

TEST_CASE("add_row enforces the column count") {
  ExperimentReport r;
  r.columns = {"a", "b"};
  CHECK_THROWS_AS(r.add_row({"1"}), ConfigError);
  CHECK_THROWS_AS(r.add_row({"1", "2", "3"}), ConfigError);
  CHECK_NOTHROW(r.add_row({"1", "2"}));
}

TEST_CASE("write_report emits the csv and a parseable json echo") {
  ExperimentReport r;
  r.id = "writer-check";
  r.config_json = json{{"seed", 7}, {"l", 64}}.dump(2);
  r.columns = {"epoch", "loss"};
  r.add_row({"1", "0.5"});
  std::string dir = (std::filesystem::temp_directory_path() / "report-out").string();
  std::filesystem::remove_all(dir);
  write_report(r, dir);
  std::string csv = slurp(dir + "/writer-check.csv");
  CHECK(csv == "epoch,loss\n1,0.5\n");
  json echo = json::parse(slurp(dir + "/writer-check.json"));
  CHECK(echo["seed"] == 7);
  CHECK(echo["l"] == 64);
}

TEST_CASE("fmt_double renders fixed precision") {
  CHECK(fmt_double(1.0, 3) == "1.000");
  CHECK(fmt_double(-0.125, 4) == "-0.1250");
  CHECK(fmt_double(2.0 / 3.0, 2) == "0.67");
}

TEST_CASE("comm table layout") {
  std::string t = comm_table({{"relu", 6.16, 0.013}, {"pair-max", 1.04, 0.0046}});
  CHECK(t ==
        "Protocol | Comm. (Kb) | Time (s)\n"
        "---------+------------+---------\n"
        "relu     |       6.16 |   0.0130\n"
        "pair-max |       1.04 |   0.0046\n");
}
