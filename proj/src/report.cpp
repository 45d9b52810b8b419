#include "mpcnn/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace mpcnn {

namespace {

std::string csv_cell(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

void ExperimentReport::add_row(std::vector<std::string> row) {
  if (row.size() != columns.size())
    throw ConfigError("report " + id + ": row width does not match the header");
  rows.push_back(std::move(row));
}

std::string to_csv(const ExperimentReport& r) {
  std::string out;
  for (std::size_t i = 0; i < r.columns.size(); ++i) {
    if (i) out += ',';
    out += csv_cell(r.columns[i]);
  }
  out += '\n';
  for (const auto& row : r.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += csv_cell(row[i]);
    }
    out += '\n';
  }
  return out;
}

void write_report(const ExperimentReport& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::filesystem::path base = std::filesystem::path(dir) / r.id;
  std::ofstream csv(base.string() + ".csv");
  if (!csv) throw FormatError("cannot write " + base.string() + ".csv");
  csv << to_csv(r);
  std::ofstream js(base.string() + ".json");
  if (!js) throw FormatError("cannot write " + base.string() + ".json");
  js << r.config_json << '\n';
}

std::string fmt_double(double v, int precision) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string comm_table(const std::vector<CommRow>& rows) {
  const std::string h0 = "Protocol", h1 = "Comm. (Kb)", h2 = "Time (s)";
  std::size_t w0 = h0.size();
  for (const auto& r : rows) w0 = std::max(w0, r.protocol.size());
  auto pad = [](const std::string& s, std::size_t w) {
    return s + std::string(w - s.size(), ' ');
  };
  auto lead = [](const std::string& s, std::size_t w) {
    return std::string(w - s.size(), ' ') + s;
  };
  std::string out = pad(h0, w0) + " | " + h1 + " | " + h2 + "\n";
  out += std::string(w0, '-') + "-+-" + std::string(h1.size(), '-') + "-+-" +
         std::string(h2.size(), '-') + "\n";
  for (const auto& r : rows)
    out += pad(r.protocol, w0) + " | " + lead(fmt_double(r.kb, 2), h1.size()) + " | " +
           lead(fmt_double(r.seconds, 4), h2.size()) + "\n";
  return out;
}

}  // namespace mpcnn
