#include "invtrans/csv.hpp"

#include <unistd.h>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>

#include "invtrans/dataset.hpp"

namespace invtrans {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_double(const std::string& field, std::size_t line_no) {
  double v = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    fail(Errc::ParseError, "line " + std::to_string(line_no) + ": bad number '" + field + "'");
  return v;
}

int parse_task_id(const std::string& field, std::size_t line_no) {
  int v = 0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{} || res.ptr != end)
    fail(Errc::ParseError, "line " + std::to_string(line_no) + ": bad task id '" + field + "'");
  return v;
}

}  // namespace

MultiTaskDataset load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::ParseError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) fail(Errc::ParseError, path + " is empty");

  const std::vector<std::string> header = split_fields(lines[0]);
  if (header.size() < 3 || header[0] != "task" || header[1] != "y")
    fail(Errc::ParseError, "header must be task,y,<feature columns>");
  const int p = static_cast<int>(header.size()) - 2;

  struct Partition {
    std::vector<double> features;  // row-major
    std::vector<double> targets;   // empty for unlabeled
  };
  std::map<std::pair<int, bool>, Partition> parts;
  std::vector<std::pair<int, bool>> order;

  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) fail(Errc::ParseError, "line " + std::to_string(li + 1) + ": blank row");
    const std::vector<std::string> fields = split_fields(lines[li]);
    if (fields.size() != header.size())
      fail(Errc::InconsistentWidth, "line " + std::to_string(li + 1) + ": " +
                                        std::to_string(fields.size()) + " fields, header has " +
                                        std::to_string(header.size()));
    const int task = parse_task_id(fields[0], li + 1);
    const bool labeled = !fields[1].empty();
    const auto key = std::make_pair(task, labeled);
    if (!parts.count(key)) order.push_back(key);
    Partition& part = parts[key];
    if (labeled) part.targets.push_back(parse_double(fields[1], li + 1));
    for (int j = 0; j < p; ++j)
      part.features.push_back(parse_double(fields[static_cast<std::size_t>(j) + 2], li + 1));
  }
  if (order.empty()) fail(Errc::ParseError, path + " has a header but no data rows");

  MultiTaskDataset ds;
  ds.p = p;
  ds.feature_names = std::vector<std::string>(header.begin() + 2, header.end());
  for (const auto& key : order) {
    const Partition& part = parts[key];
    TaskSample t;
    t.task_id = key.first;
    const Eigen::Index n = static_cast<Eigen::Index>(part.features.size()) / p;
    t.features.resize(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j)
        t.features(i, j) = part.features[static_cast<std::size_t>(i * p + j)];
    if (key.second)
      t.targets = Eigen::Map<const Eigen::VectorXd>(part.targets.data(),
                                                    static_cast<Eigen::Index>(part.targets.size()));
    ds.tasks.push_back(std::move(t));
  }
  validate_dataset(ds);
  return ds;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_csv(const MultiTaskDataset& ds, const std::string& path) {
  validate_dataset(ds);
  std::string out = "task,y";
  for (int j = 0; j < ds.p; ++j) {
    out += ',';
    out += ds.feature_names ? (*ds.feature_names)[static_cast<std::size_t>(j)]
                            : "x" + std::to_string(j + 1);
  }
  out += '\n';
  for (const auto& t : ds.tasks) {
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      out += std::to_string(t.task_id);
      out += ',';
      if (t.labeled()) out += format_double((*t.targets)[i]);
      for (int j = 0; j < ds.p; ++j) {
        out += ',';
        out += format_double(t.features(i, j));
      }
      out += '\n';
    }
  }
  atomic_write_text(path, out);
}

void atomic_write_text(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::ParseError, "cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) fail(Errc::ParseError, "write to " + tmp.string() + " failed");
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    fail(Errc::ParseError, "rename to " + path + " failed: " + ec.message());
  }
}

}  // namespace invtrans
