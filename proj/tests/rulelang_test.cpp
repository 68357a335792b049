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

#include <fstream>
#include <functional>
#include <sstream>

#include "mxgate/rng.hpp"
#include "mxgate/rulelang.hpp"
#include "mxgate/phenotype.hpp"
#include "mxgate/table1.hpp"
#include "mxgate/text_io.hpp"

namespace mxgate {
namespace {

TEST(Parse, FourWayOrGroup) {
  auto p = parse_rule_program("group Epi := NaKATPase | PanCK | Muc2 | CgA");
  ASSERT_EQ(p.steps().size(), 1u);
  const auto& s = p.steps()[0];
  EXPECT_EQ(s.kind, StepKind::Define);
  EXPECT_EQ(s.name, "Epi");
  EXPECT_EQ(s.index, 1);
  // Left-associative: ((NaKATPase | PanCK) | Muc2) | CgA
  auto expected = GateExpr::make_or(
      GateExpr::make_or(GateExpr::make_or(GateExpr::make_marker("NaKATPase", 0), GateExpr::make_marker("PanCK", 1)),
                        GateExpr::make_marker("Muc2", 2)),
      GateExpr::make_marker("CgA", 3));
  EXPECT_TRUE(structurally_equal(*s.expr, *expected));
}

TEST(Parse, AnnotateGoblet) {
  auto p = parse_rule_program(
      "group Epi := NaKATPase | PanCK | Muc2 | CgA\n"
      "group Progenitor := Sox9 | OLFM4\n"
      "annotate goblet := Epi & Muc2 & !Progenitor\n");
  const auto& s = p.steps().back();
  EXPECT_EQ(s.kind, StepKind::Annotate);
  EXPECT_EQ(s.name, "goblet");
  auto expected = GateExpr::make_and(GateExpr::make_and(GateExpr::make_group("Epi"), GateExpr::make_marker("Muc2", 2)),
                                     GateExpr::make_not(GateExpr::make_group("Progenitor")));
  EXPECT_TRUE(structurally_equal(*s.expr, *expected));
  EXPECT_EQ(p.classes(), std::vector<std::string>{"goblet"});
}

TEST(Parse, UndefinedReferenceNamesIdentifier) {
  try {
    parse_rule_program("group X := Y | CD4");
    FAIL() << "expected SemanticError";
  } catch (const SemanticError& e) {
    EXPECT_NE(std::string(e.what()).find("'Y'"), std::string::npos) << e.what();
  }
}

TEST(Parse, ForwardGroupReference) {
  try {
    parse_rule_program("exclude Later\ngroup Later := CD4\n");
    FAIL();
  } catch (const SemanticError& e) {
    EXPECT_NE(std::string(e.what()).find("forward"), std::string::npos);
    EXPECT_EQ(e.line(), 1);
  }
}

TEST(Parse, DuplicateClassName) {
  EXPECT_THROW(parse_rule_program("annotate a := CD4\nannotate a := CD8\n"), SemanticError);
}

TEST(Parse, GroupShadowingMarkerRejected) {
  EXPECT_THROW(parse_rule_program("group CD4 := CD8\n"), SemanticError);
}

TEST(Parse, SyntaxErrorsCarryPosition) {
  try {
    parse_rule_program("group Epi := PanCK |\n");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 1);
    EXPECT_EQ(e.column(), 21);
  }
  try {
    parse_rule_program("\n\nexclude (CD4 & CD8\n");
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.line(), 3);
  }
  EXPECT_THROW(parse_rule_program("frobnicate CD4"), SyntaxError);
  EXPECT_THROW(parse_rule_program("group A = CD4"), SyntaxError);
  EXPECT_THROW(parse_rule_program("exclude CD4 $"), SyntaxError);
  EXPECT_THROW(parse_rule_program("annotate \"helper T := CD4"), SyntaxError);
}

TEST(Parse, QuotedAndCommentedLines) {
  auto p = parse_rule_program(
      "# header comment\n"
      "\n"
      "annotate \"helper T\" := CD4 & !CD8   # T helper cells\n"
      "annotate helper_T := CD8\n");
  ASSERT_EQ(p.classes().size(), 2u);
  EXPECT_EQ(p.classes()[0], "helper T");
  EXPECT_EQ(p.classes()[1], "helper_T");
  EXPECT_EQ(p.steps()[0].purpose, "T helper cells");
  EXPECT_EQ(p.steps()[0].line, 3);
}

TEST(Parse, ExplicitPanel) {
  auto p = parse_rule_program("panel A, B, \"C d\"\nannotate x := A & \"C d\"\n");
  ASSERT_EQ(p.panel().size(), 3u);
  EXPECT_EQ(p.panel()[2].name, "C d");
  EXPECT_EQ(p.referenced_mask(), 0b101u);
  EXPECT_THROW(parse_rule_program("panel A, B\nannotate x := CD4\n"), SemanticError);
  EXPECT_THROW(parse_rule_program("panel A, A\n"), SemanticError);
  EXPECT_THROW(parse_rule_program("exclude CD4\npanel A\n"), SyntaxError);
}

TEST(Canonical, ShapeOfTheCascade) {
  const auto p = canonical_table1_program();
  ASSERT_EQ(p.steps().size(), 31u);
  const std::vector<std::string> classes = {"goblet", "endocrine", "epithelial", "fibroblast", "stromal",
                                            "myeloid", "helper T", "cytotoxic T", "T cell receptor", "monocyte",
                                            "macrophage", "B", "leukocyte", "progenitor"};
  EXPECT_EQ(p.classes(), classes);
  for (const auto& s : p.steps()) {
    if (s.index <= 16) EXPECT_NE(s.kind, StepKind::Annotate) << s.index;
    else if (s.index == 20) EXPECT_EQ(s.kind, StepKind::Define);
    else EXPECT_EQ(s.kind, StepKind::Annotate) << s.index;
  }
  for (int define : {1, 2, 4, 9, 20}) EXPECT_EQ(p.step(define).kind, StepKind::Define);
}

TEST(Canonical, Step3And24) {
  const auto p = canonical_table1_program();
  const auto& s3 = p.step(3);
  EXPECT_EQ(s3.kind, StepKind::Exclude);
  EXPECT_TRUE(structurally_equal(*s3.expr, *GateExpr::make_and(GateExpr::make_group("Epi"), GateExpr::make_group("Stroma"))));

  const auto& s24 = p.step(24);
  EXPECT_EQ(s24.kind, StepKind::Annotate);
  EXPECT_EQ(s24.name, "helper T");
  auto cd4 = GateExpr::make_marker("CD4", *p.marker_index("CD4"));
  auto expected = GateExpr::make_and(GateExpr::make_and(GateExpr::make_group("Immune"), cd4),
                                     GateExpr::make_not(GateExpr::make_group("Progenitor")));
  EXPECT_TRUE(structurally_equal(*s24.expr, *expected));
}

TEST(Canonical, SixteenReferencedMarkersDapiUnused) {
  const auto p = canonical_table1_program();
  EXPECT_EQ(p.panel().size(), 17u);
  const auto refs = p.referenced_markers();
  EXPECT_EQ(refs.size(), 16u);
  for (const auto& m : refs) EXPECT_NE(m.name, "DAPI");
  EXPECT_TRUE(p.marker_index("DAPI").has_value());
  EXPECT_TRUE(p.marker_index("CD11B").has_value());
  EXPECT_FALSE(p.marker_index("CD11b").has_value());
}

TEST(Canonical, EmbeddedTextMatchesInstalledAsset) {
  std::ifstream in(std::string(MXGATE_DATA_DIR) + "/table1.gate", std::ios::binary);
  ASSERT_TRUE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string file = ss.str(), text(kTable1Source);
  ASSERT_GE(file.size(), text.size());
  EXPECT_EQ(file.substr(file.size() - text.size()), text);
  // Only a comment block precedes the embedded text.
  for (const auto& line : split_lines(file.substr(0, file.size() - text.size())))
    EXPECT_TRUE(line.empty() || line[0] == '#') << line;
}

TEST(Compile, CanonicalHas31StepsAnd14Annotations) {
  const auto c = compile_program(canonical_table1_program());
  EXPECT_EQ(c.step_count(), 31u);
  EXPECT_EQ(c.annotate_count(), 14u);
  EXPECT_EQ(c.classes().size(), 14u);
}

TEST(Compile, EmptyProgramMapsToUnassigned) {
  const auto p = parse_rule_program("");
  const auto c = compile_program(p);
  EXPECT_EQ(c.step_count(), 0u);
  for (std::uint64_t bits : {0ULL, 1ULL, 0x1FFFFULL})
    EXPECT_EQ(evaluate(c, GateVector{bits}), PhenotypeOutcome::unassigned());
}

TEST(Compile, PanelOver64IsCapacityError) {
  std::string src = "panel ";
  for (int i = 0; i < 65; ++i) src += (i ? ", M" : "M") + std::to_string(i);
  src += "\nannotate a := M0\n";
  const auto p = parse_rule_program(src);
  EXPECT_THROW(compile_program(p), CapacityError);
}

// Random program generator over a small panel, used by round-trip and
// compilation soundness properties.
RuleProgram random_program(Rng& rng) {
  const int panel_size = 3 + static_cast<int>(rng.uniform_index(6));
  std::vector<std::string> groups;
  std::string src = "panel ";
  for (int i = 0; i < panel_size; ++i) src += (i ? ", M" : "M") + std::to_string(i);
  src += '\n';

  std::function<std::string(int)> expr = [&](int depth) -> std::string {
    const auto pick = rng.uniform_index(depth > 3 ? 2 : 6);
    switch (pick) {
      case 0: return "M" + std::to_string(rng.uniform_index(static_cast<std::uint64_t>(panel_size)));
      case 1:
        if (!groups.empty()) return groups[rng.uniform_index(groups.size())];
        return "M0";
      case 2: return "!" + expr(depth + 1);
      case 3: return expr(depth + 1) + " & " + expr(depth + 1);
      case 4: return "(" + expr(depth + 1) + " | " + expr(depth + 1) + ")";
      default: return "!(" + expr(depth + 1) + ")";
    }
  };

  const int steps = static_cast<int>(rng.uniform_index(10));
  int classes = 0;
  for (int i = 0; i < steps; ++i) {
    switch (rng.uniform_index(3)) {
      case 0: {
        std::string g = "G" + std::to_string(groups.size());
        src += "group " + g + " := " + expr(0) + "\n";
        groups.push_back(g);
        break;
      }
      case 1: src += "exclude " + expr(0) + "  # step " + std::to_string(i) + "\n"; break;
      default: src += "annotate \"class " + std::to_string(classes++) + "\" := " + expr(0) + "\n"; break;
    }
  }
  return parse_rule_program(src);
}

TEST(Property, PrettyPrintRoundTrips) {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const auto p = random_program(rng);
    const auto q = parse_rule_program(pretty_print(p));
    ASSERT_TRUE(structurally_equal(p, q)) << pretty_print(p);
  }
  const auto canon = canonical_table1_program();
  EXPECT_TRUE(structurally_equal(canon, parse_rule_program(pretty_print(canon))));
}

TEST(Property, CompiledMatchesNaiveOnRandomPrograms) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const auto p = random_program(rng);
    const auto rep = enumerate_rule_space(p, p.panel_mask());
    ASSERT_EQ(rep.disagreements, 0u) << pretty_print(p);
    ASSERT_EQ(rep.outcome_sum(), rep.total_vectors);
  }
}

}  // namespace
}  // namespace mxgate
