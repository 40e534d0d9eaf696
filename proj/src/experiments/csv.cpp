#include <charconv>
#include <fstream>
#include <sstream>

#include "tiltline/experiments.hpp"

namespace tiltline::experiments {

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void CsvTable::write(std::ostream& out) const {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << ',';
      out << cells[i];
    }
    out << '\n';
  };
  if (!preamble.empty()) out << "# " << preamble << '\n';
  line(header);
  for (const auto& r : rows) line(r);
}

void CsvTable::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write(out);
  if (!out) throw IoError("write failed for " + path);
}

CsvTable CsvTable::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty csv " + path);
  if (line.rfind("# ", 0) == 0) {
    t.preamble = line.substr(2);
    if (!std::getline(in, line)) throw IoError("csv without header " + path);
  }
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split(line));
    if (t.rows.back().size() != t.header.size()) throw IoError("ragged row in " + path);
  }
  return t;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw IoError("no column " + name);
}

CsvTable gates_table(const std::vector<Gate>& gates) {
  CsvTable t;
  t.header = {"name", "estimate", "lower", "upper", "threshold", "verdict", "detail"};
  for (const auto& g : gates) {
    std::string detail = g.detail;
    for (auto& ch : detail) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    t.add({g.name, format_double(g.estimate), format_double(g.lower), format_double(g.upper),
           format_double(g.threshold), g.passed ? "pass" : "fail", detail});
  }
  return t;
}

}  // namespace tiltline::experiments
