#pragma once

#include <string>
#include <vector>

#include "mpcnn/common.hpp"

namespace mpcnn {

// One experiment's outputs: a CSV metric series under a stable header and a
// JSON echo of the resolved configuration, written side by side so runs can
// be diffed across machines.
struct ExperimentReport {
  std::string id;
  std::string config_json;  // already-rendered configuration echo
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
};

std::string to_csv(const ExperimentReport& r);

// writes <dir>/<id>.csv and <dir>/<id>.json; creates the directory
void write_report(const ExperimentReport& r, const std::string& dir);

// fixed-precision decimal rendering for metric cells
std::string fmt_double(double v, int precision);

struct CommRow {
  std::string protocol;
  double kb = 0;       // mean traffic per evaluation, kilobits
  double seconds = 0;  // mean wall-clock per evaluation
};

// aligned text table: Protocol | Comm. (Kb) | Time (s)
std::string comm_table(const std::vector<CommRow>& rows);

}  // namespace mpcnn
