#include "axisfit/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace axisfit {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
  std::ostringstream os;
  os << "line " << line << ": " << what;
  throw Error(ErrorKind::parse, os.str());
}

double parse_double(const std::string& field, std::size_t line, const char* name) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = first + field.size();
  if (!field.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (field.empty() || ec != std::errc() || ptr != last) {
    parse_error(line, std::string("field ") + name + " is not a number: '" + field + "'");
  }
  return v;
}

long parse_index(const std::string& field, std::size_t line) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (field.empty() || ec != std::errc() || ptr != field.data() + field.size() || v < 0) {
    parse_error(line, "frame_index must be a non-negative integer: '" + field + "'");
  }
  return v;
}

struct PendingSubject {
  std::string id;
  std::string group;
  std::map<long, RotationMatrix> frames;
};

constexpr const char* kRotationNames[9] = {"r11", "r12", "r13", "r21", "r22", "r23", "r31", "r32", "r33"};
constexpr const char* kCardanNames[3] = {"alpha_deg", "gamma_deg", "phi_deg"};

void apply_metadata(const std::string& body, DatasetMetadata& meta, std::size_t line) {
  const auto eq = body.find('=');
  if (eq == std::string::npos) return;
  const std::string key = trim(body.substr(0, eq));
  const std::string value = trim(body.substr(eq + 1));
  if (key == "source") {
    meta.source = value;
  } else if (key == "sampling_hz") {
    meta.sampling_hz = parse_double(value, line, "sampling_hz");
  } else if (key == "stride") {
    meta.stride = static_cast<int>(parse_index(value, line));
    if (meta.stride < 1) parse_error(line, "stride must be >= 1");
  }
}

}  // namespace

const char* to_string(FrameFormat format) {
  switch (format) {
    case FrameFormat::automatic:
      return "auto";
    case FrameFormat::rotation:
      return "rotation";
    case FrameFormat::cardan_degrees:
      return "cardan";
  }
  return "?";
}

FrameFormat parse_frame_format(const std::string& name) {
  for (auto f : {FrameFormat::automatic, FrameFormat::rotation, FrameFormat::cardan_degrees}) {
    if (name == to_string(f)) return f;
  }
  throw Error(ErrorKind::usage, "unknown frame format '" + name + "' (auto, rotation, cardan)");
}

std::size_t Dataset::total_frames() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.size();
  return n;
}

const SubjectData& Dataset::subject(const std::string& id) const {
  for (const auto& s : subjects) {
    if (s.subject_id() == id) return s;
  }
  throw Error(ErrorKind::usage, "no subject '" + id + "' in the dataset");
}

Dataset read_dataset(std::istream& in, const LoadOptions& opts, const std::string& source) {
  Dataset data;
  data.metadata.source = source;
  std::vector<PendingSubject> pending;
  std::map<std::string, std::size_t> index_of;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      apply_metadata(line.substr(1), data.metadata, line_no);
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.front() == "subject_id") continue;

    FrameFormat format = opts.format;
    if (format == FrameFormat::automatic) {
      if (fields.size() == 12) {
        format = FrameFormat::rotation;
      } else if (fields.size() == 6) {
        format = FrameFormat::cardan_degrees;
      } else {
        std::ostringstream os;
        os << "expected 12 (rotation) or 6 (Cardan) fields, got " << fields.size();
        parse_error(line_no, os.str());
      }
    }
    const std::size_t expected = format == FrameFormat::rotation ? 12 : 6;
    if (fields.size() != expected) {
      std::ostringstream os;
      os << "expected " << expected << " fields, got " << fields.size();
      parse_error(line_no, os.str());
    }
    if (fields[0].empty()) parse_error(line_no, "empty subject_id");
    const long frame_index = parse_index(fields[2], line_no);

    Mat3 m;
    if (format == FrameFormat::rotation) {
      for (int k = 0; k < 9; ++k) m(k / 3, k % 3) = parse_double(fields[3 + k], line_no, kRotationNames[k]);
    } else {
      CardanAngles c;
      c.alpha = deg_to_rad(parse_double(fields[3], line_no, kCardanNames[0]));
      c.gamma = deg_to_rad(parse_double(fields[4], line_no, kCardanNames[1]));
      c.phi = deg_to_rad(parse_double(fields[5], line_no, kCardanNames[2]));
      m = compose_xzy(c).matrix();
    }

    auto it = index_of.find(fields[0]);
    if (it == index_of.end()) {
      it = index_of.emplace(fields[0], pending.size()).first;
      pending.push_back({fields[0], fields[1], {}});
    }
    PendingSubject& subj = pending[it->second];
    if (subj.group != fields[1]) {
      parse_error(line_no, "subject '" + subj.id + "' changes group from '" + subj.group + "' to '" + fields[1] + "'");
    }
    if (subj.frames.count(frame_index)) {
      std::ostringstream os;
      os << "duplicate frame_index " << frame_index << " for subject '" << subj.id << "'";
      parse_error(line_no, os.str());
    }
    try {
      subj.frames.emplace(frame_index, RotationMatrix::from_matrix(m));
    } catch (const Error& e) {
      std::ostringstream os;
      os << "line " << line_no << ": subject '" << subj.id << "' frame " << frame_index << ": " << e.what();
      if (opts.strict) throw Error(ErrorKind::validation, os.str());
      data.rejected.push_back({line_no, subj.id, frame_index, e.what()});
    }
  }
  if (pending.empty()) throw Error(ErrorKind::parse, "dataset '" + source + "' contains no frames");
  for (auto& p : pending) {
    std::vector<RotationMatrix> frames;
    frames.reserve(p.frames.size());
    for (auto& [idx, r] : p.frames) frames.push_back(r);
    data.subjects.emplace_back(p.id, std::move(frames), p.group);
  }
  return data;
}

Dataset load_dataset(const std::string& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::parse, "cannot open dataset '" + path + "'");
  return read_dataset(in, opts, path);
}

void write_dataset(const Dataset& data, std::ostream& out) {
  out << "# source=" << data.metadata.source << "\n";
  if (data.metadata.sampling_hz > 0.0) out << "# sampling_hz=" << data.metadata.sampling_hz << "\n";
  out << "# stride=" << data.metadata.stride << "\n";
  out << "subject_id,group_id,frame_index";
  for (const char* name : kRotationNames) out << ',' << name;
  out << "\n" << std::setprecision(17);
  for (const auto& s : data.subjects) {
    std::size_t j = 0;
    for (const auto& r : s.rotations()) {
      out << s.subject_id() << ',' << s.group_id() << ',' << j++;
      for (int k = 0; k < 9; ++k) out << ',' << r(k / 3, k % 3);
      out << "\n";
    }
  }
}

void write_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::usage, "cannot write dataset '" + path + "'");
  write_dataset(data, out);
}

Dataset subsample(const Dataset& data, int stride) {
  if (stride < 1) throw Error(ErrorKind::usage, "stride must be >= 1");
  Dataset out;
  out.metadata = data.metadata;
  out.metadata.stride = data.metadata.stride * stride;
  out.rejected = data.rejected;
  for (const auto& s : data.subjects) {
    std::vector<RotationMatrix> kept;
    const auto rot = s.rotations();
    for (std::size_t j = 0; j < rot.size(); j += static_cast<std::size_t>(stride)) kept.push_back(rot[j]);
    SubjectData sub(s.subject_id(), std::move(kept), s.group_id());
    if (stride > 1) sub.require_fittable();
    out.subjects.push_back(std::move(sub));
  }
  return out;
}

}  // namespace axisfit
