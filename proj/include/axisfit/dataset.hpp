#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "axisfit/subject_fit.hpp"

namespace axisfit {

// Rotation rows: subject_id, group_id, frame_index, r11, r12, ..., r33
// (row-major). Cardan rows: subject_id, group_id, frame_index, alpha_deg,
// gamma_deg, phi_deg (X-Z-Y). Blank lines and lines starting with '#' are
// skipped, except "# key=value" metadata (source, sampling_hz, stride). An
// optional header row starting with "subject_id" is accepted.
enum class FrameFormat { automatic, rotation, cardan_degrees };

const char* to_string(FrameFormat format);
FrameFormat parse_frame_format(const std::string& name);

struct DatasetMetadata {
  std::string source;
  double sampling_hz = 0.0;  // 0 when unknown
  int stride = 1;
};

struct RejectedRow {
  std::size_t line = 0;
  std::string subject_id;
  long frame_index = 0;
  std::string reason;
};

struct Dataset {
  std::vector<SubjectData> subjects;
  DatasetMetadata metadata;
  std::vector<RejectedRow> rejected;

  std::size_t total_frames() const;
  const SubjectData& subject(const std::string& id) const;  // throws usage
};

struct LoadOptions {
  FrameFormat format = FrameFormat::automatic;
  // false: invalid matrices are dropped and listed in Dataset::rejected.
  bool strict = true;
};

/// Parse errors (ErrorKind::parse) carry "line N"; invalid matrices raise
/// ErrorKind::validation naming the subject and frame, with "reflection"
/// for det < 0.
Dataset load_dataset(const std::string& path, const LoadOptions& opts = {});
Dataset read_dataset(std::istream& in, const LoadOptions& opts = {}, const std::string& source = "<stream>");

/// Writes rotation rows with full precision; load_dataset reads it back exactly.
void write_dataset(const Dataset& data, const std::string& path);
void write_dataset(const Dataset& data, std::ostream& out);

/// Keeps frames 0, stride, 2 stride, ... of every subject. Throws
/// ErrorKind::usage for stride < 1 and ErrorKind::too_few_frames when a
/// subject ends with fewer than 6 frames.
Dataset subsample(const Dataset& data, int stride);

}  // namespace axisfit
