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

#include <algorithm>
#include <array>
#include <initializer_list>
#include <string_view>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "mxgate/error.hpp"
#include "mxgate/nucleus.hpp"
#include "mxgate/rulelang.hpp"

namespace mxgate {

/// Positive/negative calls for one nucleus; bit i is panel marker i.
struct GateVector {
  std::uint64_t bits = 0;

  bool test(int marker) const noexcept { return ((bits >> marker) & 1U) != 0; }
  void set(int marker) noexcept { bits |= std::uint64_t{1} << marker; }

  bool operator==(const GateVector&) const = default;
};

/// Builds a gate vector from marker names against a program's panel.
inline GateVector make_gates(const RuleProgram& program, std::initializer_list<std::string_view> positive) {
  GateVector g;
  for (auto name : positive) {
    auto idx = program.marker_index(name);
    if (!idx) throw InvalidArgument("marker '" + std::string(name) + "' not in panel");
    g.set(*idx);
  }
  return g;
}

struct PhenotypeOutcome {
  enum class Kind : std::uint8_t { Unassigned, Excluded, Assigned };

  Kind kind = Kind::Unassigned;
  std::int16_t step = 0;          // 0 when unassigned
  std::int16_t class_index = -1;  // assigned only

  static constexpr PhenotypeOutcome unassigned() { return {}; }
  static constexpr PhenotypeOutcome excluded(int step) {
    return {Kind::Excluded, static_cast<std::int16_t>(step), -1};
  }
  static constexpr PhenotypeOutcome assigned(int class_index, int step) {
    return {Kind::Assigned, static_cast<std::int16_t>(step), static_cast<std::int16_t>(class_index)};
  }

  bool is_assigned() const noexcept { return kind == Kind::Assigned; }
  bool is_excluded() const noexcept { return kind == Kind::Excluded; }

  bool operator==(const PhenotypeOutcome&) const = default;
};

inline const char* to_string(PhenotypeOutcome::Kind k) {
  switch (k) {
    case PhenotypeOutcome::Kind::Unassigned: return "unassigned";
    case PhenotypeOutcome::Kind::Excluded: return "excluded";
    case PhenotypeOutcome::Kind::Assigned: return "assigned";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// 64-lane kernel

namespace detail {

// Evaluates up to 64 gate words. Returns the mask of lanes where two or more
// annotate steps matched; those lanes' outcomes are left unassigned.
inline std::uint64_t run_block(const CompiledProgram& program, const std::uint64_t* gates, std::size_t n,
                               std::uint64_t* regs, PhenotypeOutcome* out) {
  const std::size_t panel = program.panel_size();
  std::fill(regs, regs + panel, std::uint64_t{0});
  const std::uint64_t referenced = program.referenced_mask();
  for (std::size_t j = 0; j < n; ++j) {
    std::uint64_t g = gates[j] & referenced;
    while (g) {
      regs[std::countr_zero(g)] |= std::uint64_t{1} << j;
      g &= g - 1;
    }
  }

  for (const Instr& ins : program.tape()) {
    switch (ins.op) {
      case Instr::Op::Not: regs[ins.dst] = ~regs[ins.a]; break;
      case Instr::Op::And: regs[ins.dst] = regs[ins.a] & regs[ins.b]; break;
      case Instr::Op::Or: regs[ins.dst] = regs[ins.a] | regs[ins.b]; break;
    }
  }

  const std::uint64_t lanes = n >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1);
  std::uint64_t alive = lanes;
  std::uint64_t assigned = 0;
  std::uint64_t multi = 0;
  for (const CompiledAction& act : program.actions()) {
    std::uint64_t hit = regs[act.reg] & alive;
    if (!hit) continue;
    if (act.kind == StepKind::Exclude) {
      alive &= ~hit;
      assigned &= ~hit;
      multi &= ~hit;
      const auto o = PhenotypeOutcome::excluded(act.step);
      for (std::uint64_t h = hit; h; h &= h - 1) out[std::countr_zero(h)] = o;
    } else {
      multi |= assigned & hit;
      const auto o = PhenotypeOutcome::assigned(act.class_index, act.step);
      for (std::uint64_t h = hit & ~assigned; h; h &= h - 1) out[std::countr_zero(h)] = o;
      assigned |= hit;
    }
  }
  for (std::uint64_t h = alive & ~assigned; h; h &= h - 1) out[std::countr_zero(h)] = PhenotypeOutcome::unassigned();
  for (std::uint64_t h = multi; h; h &= h - 1) out[std::countr_zero(h)] = PhenotypeOutcome::unassigned();
  return multi;
}

// Classes matched by one lane after run_block, for error reporting.
inline std::vector<std::string> matched_classes(const CompiledProgram& program, const std::uint64_t* regs,
                                                std::size_t lane) {
  std::vector<std::string> out;
  for (const CompiledAction& act : program.actions()) {
    if (((regs[act.reg] >> lane) & 1U) == 0) continue;
    if (act.kind == StepKind::Exclude) return {};
    out.push_back(program.classes()[static_cast<std::size_t>(act.class_index)]);
  }
  return out;
}

inline void check_conforms(const CompiledProgram& program, GateVector g) {
  if (g.bits & ~program.panel_mask())
    throw InvalidArgument("gate vector has bits beyond the panel");
}

}  // namespace detail

/// Runs the cascade on one gate vector. Throws MultiAssignment when more
/// than one annotate step matches.
inline PhenotypeOutcome evaluate(const CompiledProgram& program, GateVector gates) {
  detail::check_conforms(program, gates);
  std::array<std::uint64_t, kMaxRegisters> regs;
  PhenotypeOutcome out;
  const std::uint64_t multi = detail::run_block(program, &gates.bits, 1, regs.data(), &out);
  if (multi) throw MultiAssignment(detail::matched_classes(program, regs.data(), 0));
  return out;
}

inline std::size_t resolve_threads(std::size_t requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

namespace detail {

// Splits [0, n) into `parts` contiguous ranges aligned to `align` and runs fn
// on each range on its own thread. Results must be written by index so the
// merge is order preserving.
template <typename Fn>
void parallel_ranges(std::size_t n, std::size_t threads, std::size_t align, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, (n + align - 1) / std::max<std::size_t>(align, 1)));
  if (threads <= 1) {
    fn(std::size_t{0}, n, std::size_t{0});
    return;
  }
  const std::size_t blocks = (n + align - 1) / align;
  const std::size_t per = (blocks + threads - 1) / threads;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t b = std::min(n, t * per * align);
    const std::size_t e = std::min(n, (t + 1) * per * align);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e, t] { fn(b, e, t); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

/// Elementwise `evaluate`, order preserving. A MultiAssignment carries the
/// lowest offending index.
inline std::vector<PhenotypeOutcome> evaluate_batch(const CompiledProgram& program, std::span<const GateVector> gates,
                                                    std::size_t threads = 1) {
  std::vector<PhenotypeOutcome> out(gates.size());
  for (const auto& g : gates) detail::check_conforms(program, g);

  std::vector<std::size_t> first_bad(resolve_threads(threads), MultiAssignment::npos);
  std::vector<std::vector<std::string>> bad_classes(first_bad.size());

  detail::parallel_ranges(gates.size(), first_bad.size(), 64, [&](std::size_t b, std::size_t e, std::size_t t) {
    std::vector<std::uint64_t> regs(program.register_count());
    std::array<std::uint64_t, 64> words;
    for (std::size_t base = b; base < e; base += 64) {
      const std::size_t n = std::min<std::size_t>(64, e - base);
      for (std::size_t j = 0; j < n; ++j) words[j] = gates[base + j].bits;
      const std::uint64_t multi = detail::run_block(program, words.data(), n, regs.data(), out.data() + base);
      if (multi && first_bad[t] == MultiAssignment::npos) {
        const auto lane = static_cast<std::size_t>(std::countr_zero(multi));
        first_bad[t] = base + lane;
        bad_classes[t] = detail::matched_classes(program, regs.data(), lane);
      }
    }
  });

  for (std::size_t t = 0; t < first_bad.size(); ++t)
    if (first_bad[t] != MultiAssignment::npos) throw MultiAssignment(bad_classes[t], first_bad[t]);
  return out;
}

// ---------------------------------------------------------------------------
// Reference interpreter

struct NaiveResult {
  PhenotypeOutcome outcome;
  std::vector<int> matched;  // class indices of every matching annotate step
  bool multi() const noexcept { return matched.size() > 1; }
};

/// Walks the steps in order with the tree-walking expression evaluator.
inline NaiveResult naive_evaluate(const RuleProgram& program, std::uint64_t bits) {
  NaiveResult r;
  int class_index = 0;
  int first_step = 0;
  for (const auto& s : program.steps()) {
    if (s.kind == StepKind::Define) continue;
    const bool hit = eval_naive(*s.expr, bits, program);
    if (s.kind == StepKind::Exclude) {
      if (hit) {
        r.outcome = PhenotypeOutcome::excluded(s.index);
        r.matched.clear();
        return r;
      }
    } else {
      if (hit) {
        if (r.matched.empty()) first_step = s.index;
        r.matched.push_back(class_index);
      }
      ++class_index;
    }
  }
  if (r.matched.size() == 1) r.outcome = PhenotypeOutcome::assigned(r.matched.front(), first_step);
  return r;
}

// ---------------------------------------------------------------------------
// Exhaustive rule-space enumeration

inline constexpr int kMaxEnumerationMarkers = 24;

struct RuleSpaceReport {
  std::uint64_t total_vectors = 0;
  std::vector<MarkerId> domain;                 // enumerated markers
  std::map<int, std::uint64_t> excluded_by_step;
  std::vector<std::uint64_t> assigned_by_class;  // indexed like program classes
  std::vector<std::string> classes;
  std::uint64_t unassigned = 0;
  std::uint64_t multi_assignment = 0;
  std::uint64_t disagreements = 0;
  std::vector<std::vector<std::uint64_t>> witnesses;  // per class, panel bit words

  std::uint64_t outcome_sum() const {
    std::uint64_t s = unassigned + multi_assignment;
    for (auto& [step, c] : excluded_by_step) s += c;
    for (auto c : assigned_by_class) s += c;
    return s;
  }

  bool sound() const noexcept { return disagreements == 0 && multi_assignment == 0; }
};

/// Evaluates every gate word over `domain_mask` (panel bit positions) with
/// both the compiled program and the naive interpreter.
inline RuleSpaceReport enumerate_rule_space(const RuleProgram& program, std::uint64_t domain_mask,
                                            bool collect_witnesses = false) {
  const int width = std::popcount(domain_mask);
  if (width > kMaxEnumerationMarkers)
    throw CapacityError("enumeration over " + std::to_string(width) + " markers exceeds " +
                        std::to_string(kMaxEnumerationMarkers));
  if (domain_mask & ~program.panel_mask()) throw InvalidArgument("enumeration domain exceeds the panel");

  const CompiledProgram compiled = compile_program(program);
  RuleSpaceReport rep;
  rep.classes = program.classes();
  rep.assigned_by_class.assign(rep.classes.size(), 0);
  if (collect_witnesses) rep.witnesses.assign(rep.classes.size(), {});
  for (const auto& m : program.panel())
    if ((domain_mask >> m.index) & 1U) rep.domain.push_back(m);

  std::vector<int> positions;
  for (std::uint64_t m = domain_mask; m; m &= m - 1) positions.push_back(std::countr_zero(m));

  const std::uint64_t total = std::uint64_t{1} << width;
  rep.total_vectors = total;
  std::vector<std::uint64_t> regs(compiled.register_count());
  std::array<std::uint64_t, 64> words;
  std::array<PhenotypeOutcome, 64> outs;

  for (std::uint64_t base = 0; base < total; base += 64) {
    const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(64, total - base));
    for (std::size_t j = 0; j < n; ++j) {
      const std::uint64_t w = base + j;
      std::uint64_t bits = 0;
      for (std::size_t k = 0; k < positions.size(); ++k)
        if ((w >> k) & 1U) bits |= std::uint64_t{1} << positions[k];
      words[j] = bits;
    }
    const std::uint64_t multi = detail::run_block(compiled, words.data(), n, regs.data(), outs.data());

    for (std::size_t j = 0; j < n; ++j) {
      const bool c_multi = ((multi >> j) & 1U) != 0;
      const NaiveResult naive = naive_evaluate(program, words[j]);
      if (c_multi != naive.multi() || (!c_multi && !(outs[j] == naive.outcome))) ++rep.disagreements;

      if (naive.multi()) {
        ++rep.multi_assignment;
        continue;
      }
      const auto& o = naive.outcome;
      switch (o.kind) {
        case PhenotypeOutcome::Kind::Excluded: ++rep.excluded_by_step[o.step]; break;
        case PhenotypeOutcome::Kind::Unassigned: ++rep.unassigned; break;
        case PhenotypeOutcome::Kind::Assigned:
          ++rep.assigned_by_class[static_cast<std::size_t>(o.class_index)];
          if (collect_witnesses) rep.witnesses[static_cast<std::size_t>(o.class_index)].push_back(words[j]);
          break;
      }
    }
  }
  return rep;
}

/// Enumerates over the markers the program actually references.
inline RuleSpaceReport enumerate_rule_space(const RuleProgram& program, bool collect_witnesses = false) {
  return enumerate_rule_space(program, program.referenced_mask(), collect_witnesses);
}

inline void print_report(std::ostream& os, const RuleSpaceReport& rep, const RuleProgram& program) {
  os << "vectors evaluated: " << rep.total_vectors << " over " << rep.domain.size() << " markers\n";
  os << "compiled/naive disagreements: " << rep.disagreements << '\n';
  os << "multi-assignment vectors: " << rep.multi_assignment << '\n';
  os << "unassigned vectors: " << rep.unassigned << '\n';
  for (auto& [step, c] : rep.excluded_by_step) {
    const auto& s = program.step(step);
    os << "excluded at step " << step << ": " << c;
    if (!s.purpose.empty()) os << "  (" << s.purpose << ')';
    os << '\n';
  }
  for (std::size_t i = 0; i < rep.classes.size(); ++i)
    os << "class " << rep.classes[i] << ": " << rep.assigned_by_class[i]
       << (rep.assigned_by_class[i] == 0 ? "  [no witness]" : "") << '\n';
}

// ---------------------------------------------------------------------------
// Labelling nuclei from mean intensities

struct LabelEntry {
  std::uint32_t nucleus_id = 0;
  GateVector gates;
  PhenotypeOutcome outcome;

  bool operator==(const LabelEntry&) const = default;
};

struct LabelTable {
  std::vector<std::string> classes;
  std::vector<LabelEntry> entries;  // sorted by nucleus id

  bool operator==(const LabelTable&) const = default;
};

/// Channel/threshold lookup for each referenced panel marker, resolved once.
struct GatingPlan {
  std::vector<std::pair<int, std::size_t>> marker_channel;  // (panel bit, channel index)
  std::vector<double> threshold;

  static GatingPlan make(const RuleProgram& program, const std::vector<std::string>& channels,
                         const ThresholdSet& thresholds) {
    GatingPlan plan;
    for (const auto& m : program.referenced_markers()) {
      auto t = thresholds.get(m.name);
      if (!t) throw MissingThreshold(m.name);
      auto it = std::find(channels.begin(), channels.end(), m.name);
      if (it == channels.end()) throw MissingChannel(m.name);
      plan.marker_channel.emplace_back(m.index, static_cast<std::size_t>(it - channels.begin()));
      plan.threshold.push_back(*t);
    }
    return plan;
  }

  // Positivity is strict: mean > threshold.
  GateVector gate(const NucleusRecord& r) const {
    GateVector g;
    for (std::size_t k = 0; k < marker_channel.size(); ++k)
      if (r.means[marker_channel[k].second] > threshold[k]) g.set(marker_channel[k].first);
    return g;
  }
};

inline LabelTable label_nuclei(const NucleusTable& table, const ThresholdSet& thresholds, const RuleProgram& program,
                               std::size_t threads = 1) {
  const GatingPlan plan = GatingPlan::make(program, table.channels, thresholds);
  const CompiledProgram compiled = compile_program(program);

  std::vector<GateVector> gates(table.records.size());
  detail::parallel_ranges(gates.size(), resolve_threads(threads), 1024, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) gates[i] = plan.gate(table.records[i]);
  });
  const auto outcomes = evaluate_batch(compiled, gates, threads);

  LabelTable out;
  out.classes = program.classes();
  out.entries.resize(gates.size());
  for (std::size_t i = 0; i < gates.size(); ++i)
    out.entries[i] = {table.records[i].id, gates[i], outcomes[i]};
  return out;
}

inline std::string gate_bits_hex(GateVector g) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(g.bits));
  return buf;
}

inline void write_label_csv(std::ostream& os, const LabelTable& table) {
  os << "nucleus_id,gate_bits_hex,outcome,class,step\n";
  for (const auto& e : table.entries) {
    os << e.nucleus_id << ',' << gate_bits_hex(e.gates) << ',' << to_string(e.outcome.kind) << ',';
    if (e.outcome.is_assigned()) os << table.classes[static_cast<std::size_t>(e.outcome.class_index)];
    os << ',';
    if (e.outcome.kind != PhenotypeOutcome::Kind::Unassigned) os << e.outcome.step;
    os << '\n';
  }
}

/// Counts of assigned nuclei per class plus excluded/unassigned totals.
struct ClassCounts {
  std::vector<std::uint64_t> per_class;
  std::uint64_t excluded = 0;
  std::uint64_t unassigned = 0;
};

inline ClassCounts count_classes(const LabelTable& table) {
  ClassCounts c;
  c.per_class.assign(table.classes.size(), 0);
  for (const auto& e : table.entries) {
    switch (e.outcome.kind) {
      case PhenotypeOutcome::Kind::Assigned: ++c.per_class[static_cast<std::size_t>(e.outcome.class_index)]; break;
      case PhenotypeOutcome::Kind::Excluded: ++c.excluded; break;
      case PhenotypeOutcome::Kind::Unassigned: ++c.unassigned; break;
    }
  }
  return c;
}

}  // namespace mxgate
