#include "avbench/core.hpp"

#include <fstream>
#include <sstream>

namespace avbench {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::string_view kWhitespace = " \t\r\n\f\v";

std::string in_quotes(std::string_view s) { return "\"" + std::string(s) + "\""; }

std::string location(std::size_t line, std::string_view field) {
  return "line " + std::to_string(line) + ", field \"" + std::string(field) + "\"";
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(kWhitespace) == std::string_view::npos;
}

ordered_json parse_line(const std::string& line, std::size_t line_no) {
  ordered_json obj;
  try {
    obj = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line_no, "", "line " + std::to_string(line_no) +
                                      ": invalid JSON: " + e.what());
  }
  if (!obj.is_object()) {
    throw ParseError(line_no, "", "line " + std::to_string(line_no) + ": expected a JSON object");
  }
  return obj;
}

std::string required_string(const ordered_json& obj, const char* field, std::size_t line_no) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw ParseError(line_no, field, location(line_no, field) + ": missing");
  }
  if (!it->is_string()) {
    throw ParseError(line_no, field, location(line_no, field) + ": expected a string");
  }
  return it->get<std::string>();
}

std::optional<std::string> optional_string(const ordered_json& obj, const char* field,
                                           std::size_t line_no) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw ParseError(line_no, field, location(line_no, field) + ": expected a string");
  }
  return it->get<std::string>();
}

constexpr const char* kSchemaFields[] = {"id",     "task",     "question_type", "question",
                                         "answer", "video_id", "rephrase_of"};

bool is_schema_field(const std::string& key) {
  for (const char* f : kSchemaFields) {
    if (key == f) return true;
  }
  return false;
}

QARecord record_from_json(const ordered_json& obj, std::size_t line_no) {
  QARecord r;
  r.id = required_string(obj, "id", line_no);
  if (r.id.empty()) throw ParseError(line_no, "id", location(line_no, "id") + ": empty");

  const std::string task = required_string(obj, "task", line_no);
  auto parsed = parse_task(task);
  if (!parsed) {
    throw ParseError(line_no, "task", location(line_no, "task") + ": unknown task " +
                                          in_quotes(task) + " (expected audio|visual|avqa)");
  }
  r.task = *parsed;

  r.question_type = trim(required_string(obj, "question_type", line_no));
  if (r.question_type.empty()) {
    throw ParseError(line_no, "question_type", location(line_no, "question_type") + ": empty");
  }
  r.question = required_string(obj, "question", line_no);
  r.answer = required_string(obj, "answer", line_no);
  r.video_id = optional_string(obj, "video_id", line_no);
  r.rephrase_of = optional_string(obj, "rephrase_of", line_no);

  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!is_schema_field(it.key())) r.extra[it.key()] = it.value();
  }
  return r;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace

ParseError::ParseError(std::size_t line, std::string field, const std::string& what)
    : Error(what), line_(line), field_(std::move(field)) {}

std::string_view to_string(Task task) {
  switch (task) {
    case Task::audio:
      return "audio";
    case Task::visual:
      return "visual";
    case Task::avqa:
      return "avqa";
  }
  return "audio";
}

std::optional<Task> parse_task(std::string_view text) {
  if (text == "audio") return Task::audio;
  if (text == "visual") return Task::visual;
  if (text == "avqa") return Task::avqa;
  return std::nullopt;
}

std::string to_string(const GroupKey& key) {
  return std::string(to_string(key.task)) + "/" + key.question_type;
}

std::string trim(std::string_view text) {
  auto first = text.find_first_not_of(kWhitespace);
  if (first == std::string_view::npos) return {};
  auto last = text.find_last_not_of(kWhitespace);
  return std::string(text.substr(first, last - first + 1));
}

DatasetManifest::DatasetManifest(std::vector<QARecord> records) : records_(std::move(records)) {
  index_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const QARecord& r = records_[i];
    if (r.id.empty()) throw Error("record " + std::to_string(i) + ": empty id");
    if (r.question_type.empty()) throw Error("record " + in_quotes(r.id) + ": empty question_type");
    auto [it, inserted] = index_.emplace(r.id, i);
    if (!inserted) {
      throw Error("duplicate id " + in_quotes(r.id) + " at records " + std::to_string(it->second) +
                  " and " + std::to_string(i));
    }
    groups_[r.group()].push_back(r.id);
  }
  for (const QARecord& r : records_) {
    if (r.rephrase_of && !index_.contains(*r.rephrase_of)) {
      throw Error("record " + in_quotes(r.id) + ": rephrase_of references unknown id " +
                  in_quotes(*r.rephrase_of));
    }
  }
}

const QARecord* DatasetManifest::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &records_[it->second];
}

DatasetManifest parse_dataset(std::istream& in) {
  std::vector<QARecord> records;
  std::vector<std::size_t> lines;
  std::unordered_map<std::string, std::size_t> first_seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    QARecord r = record_from_json(parse_line(line, line_no), line_no);
    auto [it, inserted] = first_seen.emplace(r.id, line_no);
    if (!inserted) {
      throw ParseError(line_no, "id",
                       "duplicate id " + in_quotes(r.id) + " on lines " +
                           std::to_string(it->second) + " and " + std::to_string(line_no));
    }
    records.push_back(std::move(r));
    lines.push_back(line_no);
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& ref = records[i].rephrase_of;
    if (ref && !first_seen.contains(*ref)) {
      throw ParseError(lines[i], "rephrase_of",
                       location(lines[i], "rephrase_of") + ": unknown id " + in_quotes(*ref));
    }
  }
  return DatasetManifest(std::move(records));
}

DatasetManifest parse_dataset(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return parse_dataset(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.field(), path.string() + ": " + e.what());
  }
}

std::string serialize_dataset(const DatasetManifest& manifest) {
  std::string out;
  for (const QARecord& r : manifest.records()) {
    ordered_json obj;
    obj["id"] = r.id;
    obj["task"] = to_string(r.task);
    obj["question_type"] = r.question_type;
    obj["question"] = r.question;
    obj["answer"] = r.answer;
    if (r.video_id) obj["video_id"] = *r.video_id;
    if (r.rephrase_of) obj["rephrase_of"] = *r.rephrase_of;
    for (auto it = r.extra.begin(); it != r.extra.end(); ++it) obj[it.key()] = it.value();
    out += obj.dump();
    out += '\n';
  }
  return out;
}

std::vector<PredictionRecord> parse_predictions(std::istream& in) {
  std::vector<PredictionRecord> preds;
  std::unordered_map<std::string, std::size_t> first_seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const ordered_json obj = parse_line(line, line_no);
    PredictionRecord p{required_string(obj, "id", line_no),
                       required_string(obj, "prediction", line_no)};
    auto [it, inserted] = first_seen.emplace(p.id, line_no);
    if (!inserted) {
      throw ParseError(line_no, "id",
                       "duplicate prediction id " + in_quotes(p.id) + " on lines " +
                           std::to_string(it->second) + " and " + std::to_string(line_no));
    }
    preds.push_back(std::move(p));
  }
  return preds;
}

std::vector<PredictionRecord> parse_predictions(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return parse_predictions(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), e.field(), path.string() + ": " + e.what());
  }
}

ValidationReport validate_pair(const DatasetManifest& manifest,
                               const std::vector<PredictionRecord>& preds) {
  ValidationReport report;
  std::unordered_map<std::string_view, bool> seen;
  seen.reserve(preds.size());
  for (const auto& p : preds) {
    seen.emplace(p.id, true);
    if (manifest.find(p.id) == nullptr) report.orphan_predictions.push_back(p.id);
  }
  for (const auto& r : manifest.records()) {
    if (!seen.contains(r.id)) report.missing_predictions.push_back(r.id);
  }
  return report;
}

std::string read_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace avbench
