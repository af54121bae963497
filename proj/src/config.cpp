#include "axisfit/config.hpp"

#include <fstream>
#include <sstream>

namespace axisfit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const char* to_string(RunMode mode) {
  switch (mode) {
    case RunMode::fit_subject:
      return "fit-subject";
    case RunMode::fit_map:
      return "fit-map";
    case RunMode::fit_population:
      return "fit-population";
    case RunMode::simulate:
      return "simulate";
    case RunMode::validate:
      return "validate";
  }
  return "?";
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::validation, what); };
  if (mode != RunMode::simulate && data.empty()) fail(std::string(to_string(mode)) + " needs a dataset (--data)");
  if (subsample_stride < 1) fail("subsample_stride must be >= 1");
  if (!(fit.tol > 0.0)) fail("tol must be > 0");
  if (fit.max_iter < 1) fail("max_iter must be >= 1");
  if (max_outer < 1) fail("max_outer must be >= 1");
  if (!(outer_tol > 0.0)) fail("outer_tol must be > 0");
  if (threads < 0) fail("threads must be >= 0");
  prior.validate();
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::parse, "cannot open config file '" + path + "'");
  std::vector<std::pair<std::string, std::string>> out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string key = eq == std::string::npos ? "" : trim(line.substr(0, eq));
    if (key.empty()) {
      std::ostringstream os;
      os << path << ": line " << line_no << ": expected key = value";
      throw Error(ErrorKind::parse, os.str());
    }
    out.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return out;
}

}  // namespace axisfit
