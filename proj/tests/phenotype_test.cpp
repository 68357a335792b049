// Copyright 2026 The mxgate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <chrono>
#include <sstream>

#include "mxgate/phenotype.hpp"
#include "mxgate/rng.hpp"
#include "mxgate/table1.hpp"

namespace mxgate {
namespace {

class CanonicalFixture : public ::testing::Test {
protected:
  RuleProgram program = canonical_table1_program();
  CompiledProgram compiled = compile_program(program);

  GateVector g(std::initializer_list<std::string_view> m) const { return make_gates(program, m); }
  PhenotypeOutcome cls(const char* name, int step) const {
    return PhenotypeOutcome::assigned(*program.class_index(name), step);
  }
};

TEST_F(CanonicalFixture, SpotExamples) {
  EXPECT_EQ(evaluate(compiled, g({"Muc2"})), cls("goblet", 17));
  EXPECT_EQ(evaluate(compiled, g({"NaKATPase", "Vimentin"})), PhenotypeOutcome::excluded(3));
  EXPECT_EQ(evaluate(compiled, g({"CD3d", "CD4", "Vimentin"})), cls("helper T", 24));
  EXPECT_EQ(evaluate(compiled, g({"Sox9", "PanCK"})), cls("progenitor", 31));
  EXPECT_EQ(evaluate(compiled, g({"CD4", "Vimentin"})), PhenotypeOutcome::excluded(8));
}

TEST_F(CanonicalFixture, AllNegativeExcludedAtStep10) {
  EXPECT_EQ(evaluate(compiled, GateVector{}), PhenotypeOutcome::excluded(10));
  EXPECT_EQ(naive_evaluate(program, 0).outcome, PhenotypeOutcome::excluded(10));
}

TEST_F(CanonicalFixture, MergedStep10LetsImmuneOnlyNucleiThrough) {
  const auto merged = canonical_table1_program_merged();
  const auto c = compile_program(merged);
  EXPECT_EQ(evaluate(c, GateVector{}), PhenotypeOutcome::excluded(10));
  EXPECT_EQ(evaluate(compiled, g({"CD3d", "CD4"})), PhenotypeOutcome::excluded(10));
  EXPECT_EQ(evaluate(c, g({"CD3d", "CD4"})), cls("helper T", 24));
}

TEST_F(CanonicalFixture, UnconformingBitsRejected) {
  EXPECT_THROW(evaluate(compiled, GateVector{1ULL << 40}), InvalidArgument);
}

TEST_F(CanonicalFixture, BatchExamples) {
  EXPECT_TRUE(evaluate_batch(compiled, std::vector<GateVector>{}).empty());
  const std::vector<GateVector> two = {g({"Muc2"}), g({"Vimentin"})};
  const auto out = evaluate_batch(compiled, two);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], cls("goblet", 17));
  EXPECT_EQ(out[1], cls("stromal", 22));
}

TEST_F(CanonicalFixture, BatchOfAMillionMatchesScalar) {
  Rng rng(2024);
  std::vector<GateVector> gates(1'000'000);
  for (auto& v : gates) v.bits = rng.next_u64() & program.referenced_mask();
  const auto batch = evaluate_batch(compiled, gates, 4);
  for (std::size_t i = 0; i < gates.size(); ++i) ASSERT_EQ(batch[i], evaluate(compiled, gates[i])) << i;
  EXPECT_EQ(evaluate_batch(compiled, gates, 1), batch);
}

// Frozen from tests/oracles/table1_oracle.py (independent transcription).
TEST_F(CanonicalFixture, EnumerationMatchesFrozenOracleCounts) {
  const auto rep = enumerate_rule_space(program, true);
  EXPECT_EQ(rep.total_vectors, 65536u);
  EXPECT_EQ(rep.disagreements, 0u);
  EXPECT_EQ(rep.multi_assignment, 0u);
  EXPECT_EQ(rep.unassigned, 0u);
  EXPECT_EQ(rep.outcome_sum(), 65536u);

  const std::map<int, std::uint64_t> excluded = {{3, 46080}, {5, 9424}, {6, 4560}, {7, 2128}, {8, 912},
                                                 {10, 128},  {11, 1016}, {12, 512}, {13, 248}, {14, 372},
                                                 {16, 93}};
  EXPECT_EQ(rep.excluded_by_step, excluded);

  const std::map<std::string, std::uint64_t> assigned = {
      {"goblet", 4},  {"endocrine", 4},   {"epithelial", 3},      {"fibroblast", 2}, {"stromal", 1},
      {"myeloid", 2}, {"helper T", 6},    {"cytotoxic T", 6},     {"T cell receptor", 4},
      {"monocyte", 4}, {"macrophage", 4}, {"B", 4},               {"leukocyte", 1},  {"progenitor", 18}};
  for (std::size_t i = 0; i < rep.classes.size(); ++i) {
    EXPECT_EQ(rep.assigned_by_class[i], assigned.at(rep.classes[i])) << rep.classes[i];
    EXPECT_EQ(rep.witnesses[i].size(), rep.assigned_by_class[i]);
  }
}

TEST_F(CanonicalFixture, MergedEnumerationMatchesFrozenOracleCounts) {
  const auto rep = enumerate_rule_space(canonical_table1_program_merged());
  EXPECT_TRUE(rep.sound());
  EXPECT_EQ(rep.excluded_by_step.at(10), 1u);
  EXPECT_EQ(rep.excluded_by_step.at(14), 465u);
  const auto& cls = rep.classes;
  auto count = [&](const char* n) {
    return rep.assigned_by_class[static_cast<std::size_t>(std::find(cls.begin(), cls.end(), n) - cls.begin())];
  };
  EXPECT_EQ(count("helper T"), 12u);
  EXPECT_EQ(count("progenitor"), 21u);
  EXPECT_EQ(count("leukocyte"), 2u);
}

TEST_F(CanonicalFixture, RemovingDuplicatedExclusionClauseChangesNothing) {
  // CD68 & CD11B is excluded by step 5 before step 6 repeats it.
  std::string src(kTable1Source);
  const std::string dup = " | CD11B & CD68  # monocyte conflicts";
  const auto pos = src.find(dup);
  ASSERT_NE(pos, std::string::npos);
  src.replace(pos, dup.size(), "  # monocyte conflicts");
  const auto edited = parse_rule_program(src);
  const auto a = compile_program(edited);
  for (std::uint64_t w = 0; w < (1u << 17); ++w)
    ASSERT_EQ(evaluate(a, GateVector{w}), evaluate(compiled, GateVector{w})) << w;

  // Step 15 is subsumed by the literal step 10; removing it is also a no-op.
  std::vector<RuleStep> steps;
  for (const auto& s : program.steps()) {
    if (s.index == 15) continue;
    auto copy = s;
    copy.index = static_cast<int>(steps.size()) + 1;
    steps.push_back(copy);
  }
  const auto without15 = compile_program(RuleProgram::build(program.panel(), steps));
  for (std::uint64_t w = 0; w < (1u << 17); ++w) {
    auto x = evaluate(without15, GateVector{w});
    auto y = evaluate(compiled, GateVector{w});
    ASSERT_EQ(x.kind, y.kind);
    ASSERT_EQ(x.class_index, y.class_index);
  }
}

TEST(PanelExtension, UnreferencedMarkerChangesNoOutcome) {
  const auto base = canonical_table1_program();
  std::string src(kTable1Source);
  const std::string panel_end = "CD8, CD4\n";
  src.replace(src.find(panel_end), panel_end.size(), "CD8, CD4, Extra\n");
  const auto extended = parse_rule_program(src);
  const auto a = compile_program(base);
  const auto b = compile_program(extended);
  const std::uint64_t extra = std::uint64_t{1} << *extended.marker_index("Extra");
  for (std::uint64_t w = 0; w < (1u << 17); ++w) {
    ASSERT_EQ(evaluate(a, GateVector{w}), evaluate(b, GateVector{w}));
    ASSERT_EQ(evaluate(a, GateVector{w}), evaluate(b, GateVector{w | extra}));
  }
}

TEST(Enumerate, EmptyProgramAllUnassigned) {
  const auto p = parse_rule_program("# nothing\n");
  const auto rep = enumerate_rule_space(p);
  EXPECT_EQ(rep.total_vectors, 1u);
  EXPECT_EQ(rep.unassigned, 1u);
  const auto wide = enumerate_rule_space(p, p.panel_mask() & 0xFFFF);
  EXPECT_EQ(wide.unassigned, wide.total_vectors);
  EXPECT_EQ(wide.total_vectors, 65536u);
}

TEST(Enumerate, DuplicateAnnotationsAreMultiAssignments) {
  const auto p = parse_rule_program("annotate a := CD4\nannotate b := CD4\n");
  // Over the 16 canonical gating markers half of the vectors are CD4+.
  const auto gating = canonical_table1_program().referenced_mask();
  const auto rep = enumerate_rule_space(p, gating);
  EXPECT_EQ(rep.total_vectors, 65536u);
  EXPECT_EQ(rep.multi_assignment, 32768u);
  EXPECT_EQ(rep.disagreements, 0u);
  // Over the referenced markers only, the domain is CD4 alone.
  EXPECT_EQ(enumerate_rule_space(p).multi_assignment, 1u);

  const auto c = compile_program(p);
  try {
    evaluate(c, make_gates(p, {"CD4"}));
    FAIL();
  } catch (const MultiAssignment& e) {
    EXPECT_EQ(e.classes(), (std::vector<std::string>{"a", "b"}));
  }
  std::vector<GateVector> batch(200);
  batch[137] = make_gates(p, {"CD4"});
  batch[190] = make_gates(p, {"CD4"});
  try {
    evaluate_batch(c, batch, 3);
    FAIL();
  } catch (const MultiAssignment& e) {
    EXPECT_EQ(e.index(), 137u);
  }
}

TEST(Enumerate, CapacityLimit) {
  std::string src = "panel ";
  for (int i = 0; i < 25; ++i) src += (i ? ", M" : "M") + std::to_string(i);
  src += "\nannotate a := M0";
  for (int i = 1; i < 25; ++i) src += " | M" + std::to_string(i);
  const auto p = parse_rule_program(src);
  EXPECT_THROW(enumerate_rule_space(p), CapacityError);
}

NucleusTable table_with(const std::vector<std::string>& channels, std::vector<std::vector<double>> means) {
  NucleusTable t;
  t.channels = channels;
  std::uint32_t id = 1;
  for (auto& m : means) t.records.push_back({id++, 0.0, 0.0, 1, std::move(m)});
  return t;
}

ThresholdSet uniform_thresholds(const RuleProgram& p, double value) {
  ThresholdSet t;
  t.slide_id = "s";
  for (const auto& m : p.referenced_markers()) t.thresholds[m.name] = value;
  return t;
}

std::vector<std::string> channel_names(const RuleProgram& p) {
  std::vector<std::string> out;
  for (const auto& m : p.panel()) out.push_back(m.name);
  return out;
}

TEST(LabelNuclei, GobletFromMeans) {
  const auto p = canonical_table1_program();
  const auto channels = channel_names(p);
  std::vector<double> means(channels.size(), 50.0);
  means[static_cast<std::size_t>(*p.marker_index("Muc2"))] = 180.0;
  const auto table = table_with(channels, {means});
  const auto labels = label_nuclei(table, uniform_thresholds(p, 125.0), p);
  ASSERT_EQ(labels.entries.size(), 1u);
  EXPECT_EQ(labels.entries[0].outcome, PhenotypeOutcome::assigned(*p.class_index("goblet"), 17));
}

TEST(LabelNuclei, EqualToThresholdIsNegative) {
  const auto p = canonical_table1_program();
  const auto channels = channel_names(p);
  std::vector<double> means(channels.size(), 0.0);
  means[static_cast<std::size_t>(*p.marker_index("Muc2"))] = 125.0;
  const auto labels = label_nuclei(table_with(channels, {means}), uniform_thresholds(p, 125.0), p);
  EXPECT_EQ(labels.entries[0].gates.bits, 0u);
  EXPECT_EQ(labels.entries[0].outcome, PhenotypeOutcome::excluded(10));
}

TEST(LabelNuclei, MissingThresholdAndChannel) {
  const auto p = canonical_table1_program();
  auto th = uniform_thresholds(p, 1.0);
  th.thresholds.erase("CD4");
  const auto table = table_with(channel_names(p), {});
  try {
    label_nuclei(table, th, p);
    FAIL();
  } catch (const MissingThreshold& e) {
    EXPECT_EQ(e.marker(), "CD4");
  }
  auto channels = channel_names(p);
  channels.erase(std::find(channels.begin(), channels.end(), "SMA"));
  try {
    label_nuclei(table_with(channels, {}), uniform_thresholds(p, 1.0), p);
    FAIL();
  } catch (const MissingChannel& e) {
    EXPECT_EQ(e.marker(), "SMA");
  }
  // DAPI is unreferenced: neither a threshold nor a channel is needed.
  auto no_dapi = channel_names(p);
  no_dapi.erase(std::find(no_dapi.begin(), no_dapi.end(), "DAPI"));
  EXPECT_NO_THROW(label_nuclei(table_with(no_dapi, {}), uniform_thresholds(p, 1.0), p));
}

TEST(LabelNuclei, DeterministicAcrossThreadCounts) {
  const auto p = canonical_table1_program();
  const auto channels = channel_names(p);
  Rng rng(5);
  std::vector<std::vector<double>> means(5000, std::vector<double>(channels.size()));
  for (auto& row : means)
    for (auto& v : row) v = rng.uniform(0, 250);
  const auto table = table_with(channels, means);
  const auto th = uniform_thresholds(p, 125.0);
  const auto one = label_nuclei(table, th, p, 1);
  EXPECT_EQ(label_nuclei(table, th, p, 3), one);
  EXPECT_EQ(label_nuclei(table, th, p, 8), one);
}

TEST(LabelCsv, Format) {
  const auto p = canonical_table1_program();
  LabelTable t;
  t.classes = p.classes();
  t.entries.push_back({3, make_gates(p, {"CD3d", "CD4", "Vimentin"}), PhenotypeOutcome::assigned(6, 24)});
  t.entries.push_back({7, GateVector{}, PhenotypeOutcome::excluded(10)});
  t.entries.push_back({9, GateVector{}, PhenotypeOutcome::unassigned()});
  std::ostringstream os;
  write_label_csv(os, t);
  EXPECT_EQ(os.str(),
            "nucleus_id,gate_bits_hex,outcome,class,step\n"
            "3,0000000000014010,assigned,helper T,24\n"
            "7,0000000000000000,excluded,,10\n"
            "9,0000000000000000,unassigned,,\n");
}

TEST(Throughput, CompiledCanonicalAtLeastTenMillionPerSecond) {
#ifndef NDEBUG
  GTEST_SKIP() << "throughput is only meaningful in optimized builds";
#endif
  const auto p = canonical_table1_program();
  const auto c = compile_program(p);
  Rng rng(1);
  std::vector<GateVector> gates(4'000'000);
  for (auto& v : gates) v.bits = rng.next_u64() & p.referenced_mask();
  evaluate_batch(c, std::span(gates).first(100000), 1);
  const auto t0 = std::chrono::steady_clock::now();
  const auto out = evaluate_batch(c, gates, 1);
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double rate = static_cast<double>(gates.size()) / sec;
  std::cout << "compiled canonical throughput: " << rate / 1e6 << " M vectors/s/core\n";
  EXPECT_GE(rate, 10e6);
  EXPECT_EQ(out.size(), gates.size());
}

}  // namespace
}  // namespace mxgate
