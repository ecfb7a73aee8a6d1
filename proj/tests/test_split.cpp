#include <doctest.h>

#include <random>
#include <set>

#include "avbench/split.hpp"

using namespace avbench;
using namespace avbench::split;

namespace {

GroupCounts counts(std::map<std::string, std::uint64_t> c) {
  return GroupCounts{GroupKey{Task::avqa, "Comparative"}, std::move(c)};
}

using Labels = std::vector<std::string>;

QARecord record(std::string id, std::string answer, std::string type = "Counting",
                Task task = Task::audio) {
  QARecord r;
  r.id = std::move(id);
  r.task = task;
  r.question_type = std::move(type);
  r.question = "?";
  r.answer = std::move(answer);
  return r;
}

// {x:4, y:1, z:1} in one group.
DatasetManifest six_records() {
  return DatasetManifest({record("r1", "x"), record("r2", "y"), record("r3", "x"),
                          record("r4", "z"), record("r5", "x"), record("r6", "x")});
}

}  // namespace

TEST_CASE("conformal split fixtures") {
  SUBCASE("dominant class") {
    const auto s = conformal_split(counts({{"x", 90}, {"y", 5}, {"z", 5}}));
    CHECK(s.head_size == 1);
    CHECK(s.k == doctest::Approx(1.0 / 3.0));
    CHECK(s.head_answers == Labels{"x"});
    CHECK(s.tail_answers == Labels{"y", "z"});
    CHECK(s.coverage == doctest::Approx(0.9));
  }
  SUBCASE("equal counts break ties by label") {
    const auto s = conformal_split(counts({{"z", 10}, {"y", 10}, {"x", 10}}));
    CHECK(s.head_size == 2);
    CHECK(s.k == doctest::Approx(2.0 / 3.0));
    CHECK(s.head_answers == Labels{"x", "y"});
    CHECK(s.tail_answers == Labels{"z"});
  }
  SUBCASE("single class") {
    const auto s = conformal_split(counts({{"x", 100}}));
    CHECK(s.head_size == 1);
    CHECK(s.k == 1.0);
    CHECK(s.head_answers == Labels{"x"});
    CHECK(s.tail_answers.empty());
  }
  SUBCASE("empty group") { CHECK_THROWS_AS(conformal_split(counts({})), Error); }
}

TEST_CASE("legacy split fixtures") {
  const auto equal = legacy_split(counts({{"x", 10}, {"y", 10}, {"z", 10}}));
  CHECK(equal.head_answers.empty());
  CHECK(equal.tail_answers == Labels{"x", "y", "z"});

  const auto dominant = legacy_split(counts({{"x", 90}, {"y", 5}, {"z", 5}}));
  CHECK(dominant.head_answers == Labels{"x"});
  CHECK(dominant.tail_answers == Labels{"y", "z"});

  const auto single = legacy_split(counts({{"x", 100}}));
  CHECK(single.head_answers.empty());
  CHECK(single.tail_answers == Labels{"x"});
}

TEST_CASE("ranked labels ignore zero counts") {
  CHECK(ranked_labels(counts({{"b", 3}, {"a", 3}, {"c", 0}, {"d", 7}})) == Labels{"d", "a", "b"});
}

TEST_CASE("conformal split is minimal, feasible, prefix-closed and a partition") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 300; ++trial) {
    std::map<std::string, std::uint64_t> c;
    const std::size_t n = 1 + gen() % 12;
    for (std::size_t i = 0; i < n; ++i) c["l" + std::to_string(i)] = 1 + gen() % 50;
    const GroupCounts g = counts(c);
    const auto s = conformal_split(g);
    const auto ranked = ranked_labels(g);
    std::uint64_t total = 0;
    for (const auto& [k, v] : c) total += v;
    auto feasible = [&](std::size_t h) {
      std::uint64_t prefix = 0;
      for (std::size_t i = 0; i < h; ++i) prefix += c.at(ranked[i]);
      return prefix * n >= (n - h) * total;
    };
    CHECK(feasible(s.head_size));
    for (std::size_t h = 1; h < s.head_size; ++h) CHECK_FALSE(feasible(h));
    CHECK(s.coverage + 1e-12 >= 1.0 - s.k);
    Labels joined = s.head_answers;
    joined.insert(joined.end(), s.tail_answers.begin(), s.tail_answers.end());
    CHECK(joined == ranked);
    if (!s.tail_answers.empty()) {
      CHECK(c.at(s.head_answers.back()) >= c.at(s.tail_answers.front()));
    }
  }
}

TEST_CASE("equal-count groups defeat legacy but not conformal") {
  for (std::size_t n = 1; n <= 20; ++n) {
    std::map<std::string, std::uint64_t> c;
    for (std::size_t i = 0; i < n; ++i) c["a" + std::to_string(i)] = 7;
    CHECK(legacy_split(counts(c)).head_answers.empty());
    CHECK_FALSE(conformal_split(counts(c)).head_answers.empty());
  }
}

TEST_CASE("assignment on a six-record group") {
  const DatasetManifest m = six_records();
  const SplitAssignment conformal = build_assignment(m, {});
  std::size_t head = 0, tail = 0;
  for (const auto& [id, side] : conformal.sides) (side == Side::head ? head : tail)++;
  CHECK(head == 4);
  CHECK(tail == 2);
  CHECK(conformal.side_of("r2") == Side::tail);
  CHECK(conformal.side_of("r1") == Side::head);
  CHECK_FALSE(conformal.side_of("zz").has_value());

  SplitConfig legacy;
  legacy.mode = Mode::legacy;
  CHECK(build_assignment(m, legacy).sides == conformal.sides);

  CHECK(build_assignment(DatasetManifest{}, {}).sides.empty());
  CHECK(build_assignment(DatasetManifest{}, {}).groups.empty());
}

TEST_CASE("balanced groups are split and flagged") {
  const DatasetManifest m({record("a", "x"), record("b", "y"), record("c", "z")});
  const auto assignment = build_assignment(m, {});
  REQUIRE(assignment.groups.size() == 1);
  CHECK(assignment.groups[0].balanced);
  CHECK(assignment.groups[0].head_size == 2);
  CHECK(assignment.group(GroupKey{Task::audio, "Counting"}) != nullptr);
  CHECK(assignment.group(GroupKey{Task::visual, "Counting"}) == nullptr);
}

TEST_CASE("split document round-trips and is deterministic") {
  const DatasetManifest m = six_records();
  const auto assignment = build_assignment(m, {});
  const std::string text = serialize_split(assignment);
  CHECK(text == serialize_split(build_assignment(m, {})));
  CHECK(split_from_json(nlohmann::json::parse(text)) == assignment);
  const auto doc = to_json(assignment);
  CHECK(doc.at("assignments").at("r4") == "tail");
  CHECK(doc.at("groups").at(0).at("head_answers") == nlohmann::json::array({"x"}));
}

TEST_CASE("malformed split documents are rejected") {
  CHECK_THROWS_AS(split_from_json(nlohmann::json::parse(R"({"groups":[]})")), Error);
  CHECK_THROWS_AS(split_from_json(nlohmann::json::parse(R"({"groups":[],"assignments":{"a":"middle"}})")),
                  Error);
}

TEST_CASE("mode and side names") {
  CHECK(parse_mode("legacy") == Mode::legacy);
  CHECK(parse_side("tail") == Side::tail);
  CHECK(to_string(Mode::conformal) == "conformal");
  CHECK_THROWS_AS(parse_mode("fuzzy"), Error);
}

TEST_CASE("total variation") {
  CHECK(total_variation({0.5, 0.5}, {0.5, 0.5}) == 0.0);
  CHECK(total_variation({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(1.0));
  CHECK(total_variation({0.8, 0.2}, {0.2, 0.8}) == doctest::Approx(0.6));
}

TEST_CASE("distribution report against a reference") {
  SUBCASE("head identical to reference") {
    const DatasetManifest m = six_records();
    const auto assignment = build_assignment(m, {});
    const DatasetManifest reference({record("t1", "x"), record("t2", "x")});
    const auto report = distribution_report(m, assignment, reference);
    REQUIRE(report.size() == 1);
    CHECK(report[0].tv_head == doctest::Approx(0.0));
    REQUIRE(report[0].tv_tail.has_value());
    CHECK(*report[0].tv_tail == doctest::Approx(1.0));
  }
  SUBCASE("hand-computed two-class fixture") {
    // Reference x:y = 3:1, head all x, tail all y.
    const DatasetManifest m({record("a", "x"), record("b", "x"), record("c", "x"), record("d", "y")});
    const auto assignment = build_assignment(m, {});
    const DatasetManifest reference(
        {record("t1", "x"), record("t2", "x"), record("t3", "x"), record("t4", "y")});
    const auto report = distribution_report(m, assignment, reference);
    REQUIRE(report.size() == 1);
    CHECK(report[0].labels == Labels{"x", "y"});
    CHECK(*report[0].tv_head == doctest::Approx(0.25));
    CHECK(*report[0].tv_tail == doctest::Approx(0.75));
    CHECK(*report[0].tv_tail > *report[0].tv_head);
  }
  SUBCASE("empty tail is absent") {
    const DatasetManifest m({record("a", "x"), record("b", "x")});
    const auto report = distribution_report(m, build_assignment(m, {}), m);
    REQUIRE(report.size() == 1);
    CHECK(report[0].tv_head == doctest::Approx(0.0));
    CHECK_FALSE(report[0].tv_tail.has_value());
    CHECK(to_json(report).at("groups").at(0).at("tv_tail").is_null());
  }
  SUBCASE("group missing from reference") {
    const DatasetManifest m({record("a", "x", "Location")});
    const DatasetManifest reference({record("t1", "x")});
    const auto report = distribution_report(m, build_assignment(m, {}), reference);
    REQUIRE(report.size() == 1);
    CHECK_FALSE(report[0].in_reference);
    CHECK_FALSE(report[0].tv_head.has_value());
  }
}
