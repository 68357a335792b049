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

#pragma once

#include <string_view>

#include "mxgate/error.hpp"
#include "mxgate/rulelang.hpp"

namespace mxgate {

/// Text of the canonical cascade. data/table1.gate is this text under a
/// license comment block; a unit test enforces that.
inline constexpr std::string_view kTable1Source = R"gate(# Canonical 31-step nucleus gating cascade over the 17-stain MxIF panel.
# DAPI is part of the panel (segmentation channel) but no rule uses it.
panel NaKATPase, PanCK, Muc2, CgA, Vimentin, DAPI, SMA, Sox9, OLFM4, Lysozyme, CD45, CD20, CD68, CD11B, CD3d, CD8, CD4

group Epi := NaKATPase | PanCK | Muc2 | CgA  # epithelial markers
group Stroma := Vimentin | SMA  # stromal markers
exclude Epi & Stroma  # epithelial/stromal conflict
group Immune := CD45 | CD20 | CD68 | CD11B | Lysozyme | CD3d | CD8 | CD4  # immune markers
exclude CD68 & CD3d | CD68 & CD20 | CD68 & CD4 | CD68 & CD8 | CD68 & CD11B  # macrophage conflicts
exclude CD11B & CD3d | CD11B & CD20 | CD11B & CD4 | CD11B & CD8 | CD11B & CD68  # monocyte conflicts
exclude CD20 & CD3d | CD20 & CD4 | CD20 & CD8  # B cell conflicts
exclude !CD3d & !CD45 & CD4 | !CD3d & !CD45 & CD8 | CD4 & CD8  # T helper/cytotoxic conflicts
group Progenitor := Sox9 | OLFM4  # progenitor markers
exclude !Epi & !Stroma  # outside epithelium and stroma
exclude Muc2 & Immune | Muc2 & Progenitor | Muc2 & SMA  # goblet conflicts
exclude CgA & Immune | CgA & SMA | CgA & Progenitor | CgA & Muc2  # endocrine conflicts
exclude SMA & Immune  # fibroblast conflicts
exclude Immune & Progenitor  # progenitor conflicts
exclude !Epi & !Stroma & !Progenitor & !Immune  # no lineage group
exclude Epi & Immune  # immune nuclei inside epithelium
annotate goblet := Epi & Muc2 & !Progenitor
annotate endocrine := Epi & CgA & !Progenitor
annotate epithelial := Epi & !CgA & !Progenitor & !Muc2
group StromaFib := Stroma & !Immune  # stromal/fibroblast pool
annotate fibroblast := StromaFib & SMA & !Progenitor
annotate stromal := StromaFib & !SMA & !Progenitor
annotate myeloid := Immune & (Lysozyme & !CD68 & !CD11B & !Progenitor & !CD20) & !CD3d & !CD8 & !CD4
annotate "helper T" := Immune & CD4 & !Progenitor
annotate "cytotoxic T" := Immune & CD8 & !Progenitor
annotate "T cell receptor" := Immune & CD3d & !CD4 & !CD8
annotate monocyte := Immune & CD11B & !CD3d & !Progenitor & !CD4 & !CD8
annotate macrophage := Immune & CD68 & !CD3d & !Progenitor & !CD4 & !CD8
annotate B := Immune & CD20 & !CD68 & !CD3d & !Progenitor & !CD4 & !CD8
annotate leukocyte := Immune & CD45 & !CD20 & !CD68 & !CD3d & !Progenitor & !CD4 & !CD8 & !CD11B & !Lysozyme
annotate progenitor := Progenitor
)gate";

inline const RuleProgram& canonical_table1_program() {
  static const RuleProgram program = parse_rule_program(kTable1Source);
  return program;
}

/// Replace the expression of exclude step `target` with that of exclude step
/// `source`. With (10, 15) on the canonical cascade this lets immune nuclei
/// without a stromal marker reach the immune annotations.
inline RuleProgram merge_exclusion_steps(const RuleProgram& program, int target, int source) {
  const int n = static_cast<int>(program.steps().size());
  if (target < 1 || target > n || source < 1 || source > n)
    throw InvalidArgument("merge_exclusion_steps: step index out of range");
  const RuleStep& src = program.step(source);
  if (program.step(target).kind != StepKind::Exclude || src.kind != StepKind::Exclude)
    throw InvalidArgument("merge_exclusion_steps: both steps must be exclude steps");
  // build() rejects a source expression that uses groups defined after the target.
  std::vector<RuleStep> steps = program.steps();
  steps[static_cast<std::size_t>(target - 1)].expr = src.expr;
  return RuleProgram::build(program.panel(), std::move(steps));
}

inline RuleProgram canonical_table1_program_merged() { return merge_exclusion_steps(canonical_table1_program(), 10, 15); }

}  // namespace mxgate
