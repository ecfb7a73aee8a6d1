#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace avbench {

/// Base class for every error raised by the library. The CLI maps these to
/// exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input at a known line of a line-delimited file.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::string field, const std::string& what);

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

enum class Task { audio, visual, avqa };

std::string_view to_string(Task task);
std::optional<Task> parse_task(std::string_view text);

/// Question group identity. Ordering is task (audio, visual, avqa) then
/// question type, which is the order used for every report.
struct GroupKey {
  Task task = Task::audio;
  std::string question_type;

  auto operator<=>(const GroupKey&) const = default;
  bool operator==(const GroupKey&) const = default;
};

std::string to_string(const GroupKey& key);

struct QARecord {
  std::string id;
  Task task = Task::audio;
  std::string question_type;
  std::string question;
  std::string answer;
  std::optional<std::string> video_id;
  std::optional<std::string> rephrase_of;
  // Fields not in the schema, kept verbatim for round-trips.
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  GroupKey group() const { return {task, question_type}; }
  bool operator==(const QARecord&) const = default;
};

struct PredictionRecord {
  std::string id;
  std::string prediction;

  bool operator==(const PredictionRecord&) const = default;
};

class DatasetManifest {
 public:
  DatasetManifest() = default;
  /// Validates ids, required fields and rephrase_of references; throws Error.
  explicit DatasetManifest(std::vector<QARecord> records);

  const std::vector<QARecord>& records() const noexcept { return records_; }
  const std::map<GroupKey, std::vector<std::string>>& groups() const noexcept {
    return groups_;
  }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  const QARecord* find(std::string_view id) const;

  bool operator==(const DatasetManifest& other) const {
    return records_ == other.records_ && groups_ == other.groups_;
  }

 private:
  std::vector<QARecord> records_;
  std::map<GroupKey, std::vector<std::string>> groups_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Trims ASCII whitespace from both ends.
std::string trim(std::string_view text);

DatasetManifest parse_dataset(std::istream& in);
DatasetManifest parse_dataset(const std::filesystem::path& path);

/// One JSON object per line, schema fields first, then preserved extras.
std::string serialize_dataset(const DatasetManifest& manifest);

std::vector<PredictionRecord> parse_predictions(std::istream& in);
std::vector<PredictionRecord> parse_predictions(const std::filesystem::path& path);

struct ValidationReport {
  std::vector<std::string> missing_predictions;  // gold ids, manifest order
  std::vector<std::string> orphan_predictions;   // prediction ids, file order

  bool valid() const { return missing_predictions.empty() && orphan_predictions.empty(); }
};

ValidationReport validate_pair(const DatasetManifest& manifest,
                               const std::vector<PredictionRecord>& preds);

/// Reads a whole file; throws Error when it cannot be opened.
std::string read_file(const std::filesystem::path& path);
/// Writes a whole file; throws Error on failure.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace avbench
