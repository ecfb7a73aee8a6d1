#pragma once

#include <string>
#include <vector>

#include "avbench/core.hpp"
#include "avbench/split.hpp"

namespace fixtures {

inline avbench::QARecord record(std::string id, avbench::Task task, std::string type,
                               std::string answer) {
  avbench::QARecord r;
  r.id = std::move(id);
  r.task = task;
  r.question_type = std::move(type);
  r.question = "q?";
  r.answer = std::move(answer);
  return r;
}

struct EvalFixture {
  avbench::DatasetManifest manifest;
  avbench::split::SplitAssignment assignment;
  std::vector<avbench::PredictionRecord> predictions;
};

// Twenty records in four groups with a fixed head/tail assignment. Correct
// predictions per cell:
//   audio/Comparative  head 1/3  tail 1/1
//   audio/Counting     head 3/4  tail 1/2
//   visual/Location    head 3/3  tail 0/2
//   avqa/Existential   head 1/2  tail 2/3
inline EvalFixture eval_fixture() {
  using avbench::Task;
  using avbench::split::Side;
  struct Row {
    const char* id;
    Task task;
    const char* type;
    Side side;
    const char* gold;
    const char* pred;
  };
  const Row rows[] = {
      {"a1", Task::audio, "Counting", Side::head, "two", "Two"},
      {"a2", Task::audio, "Counting", Side::head, "two", "two."},
      {"a3", Task::audio, "Counting", Side::head, "three", " three "},
      {"a4", Task::audio, "Counting", Side::head, "two", "2"},
      {"a5", Task::audio, "Counting", Side::tail, "five", "five"},
      {"a6", Task::audio, "Counting", Side::tail, "zero", "one"},
      {"a7", Task::audio, "Comparative", Side::head, "yes", "YES!"},
      {"a8", Task::audio, "Comparative", Side::head, "yes", "no"},
      {"a9", Task::audio, "Comparative", Side::head, "yes", "no"},
      {"a10", Task::audio, "Comparative", Side::tail, "no", "no"},
      {"v1", Task::visual, "Location", Side::head, "left", "left"},
      {"v2", Task::visual, "Location", Side::head, "left", "Left"},
      {"v3", Task::visual, "Location", Side::head, "right", "right"},
      {"v4", Task::visual, "Location", Side::tail, "middle", "left"},
      {"v5", Task::visual, "Location", Side::tail, "top left", "left"},
      {"x1", Task::avqa, "Existential", Side::head, "yes", "yes"},
      {"x2", Task::avqa, "Existential", Side::head, "yes", "no"},
      {"x3", Task::avqa, "Existential", Side::tail, "no", "no"},
      {"x4", Task::avqa, "Existential", Side::tail, "no", "No."},
      {"x5", Task::avqa, "Existential", Side::tail, "no", "yes"},
  };
  EvalFixture f;
  std::vector<avbench::QARecord> records;
  for (const Row& r : rows) {
    records.push_back(record(r.id, r.task, r.type, r.gold));
    f.assignment.sides[r.id] = r.side;
    f.predictions.push_back({r.id, r.pred});
  }
  f.manifest = avbench::DatasetManifest(std::move(records));
  return f;
}

struct SamplerFixture {
  avbench::DatasetManifest manifest;
  avbench::split::SplitAssignment assignment;
};

// 1000 records: five audio question types, each with 100 head and 100 tail
// records, so ten equal cells.
inline SamplerFixture sampler_fixture() {
  SamplerFixture f;
  std::vector<avbench::QARecord> records;
  for (int type = 0; type < 5; ++type) {
    for (int i = 0; i < 200; ++i) {
      const std::string id = "t" + std::to_string(type) + "_" + std::to_string(i);
      records.push_back(record(id, avbench::Task::audio, "Type" + std::to_string(type),
                               "ans" + std::to_string(i % 7)));
      f.assignment.sides[id] = i % 2 == 0 ? avbench::split::Side::head : avbench::split::Side::tail;
    }
  }
  f.manifest = avbench::DatasetManifest(std::move(records));
  return f;
}

}  // namespace fixtures
