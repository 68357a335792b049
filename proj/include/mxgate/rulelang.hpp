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

// A small line-oriented boolean gating language.
//
//   panel    NaKATPase, PanCK, Muc2, ...        (optional, first step line)
//   group    Epi := NaKATPase | PanCK | Muc2 | CgA
//   exclude  Epi & Stroma                       # purpose text
//   annotate "helper T" := Immune & CD4 & !Progenitor
//
// `!` binds tighter than `&`, which binds tighter than `|`. A trailing `#`
// comment on a step line is kept as the step's purpose.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mxgate/error.hpp"

namespace mxgate {

inline constexpr int kMaxPanelMarkers = 64;

struct MarkerId {
  std::string name;
  int index = 0;

  bool operator==(const MarkerId&) const = default;
};

struct GateExpr;
using ExprPtr = std::shared_ptr<const GateExpr>;

/// Immutable expression node. Trees are shared, never mutated after build.
struct GateExpr {
  enum class Kind { Marker, GroupRef, Not, And, Or };

  Kind kind;
  std::string name;  // marker or group name
  int marker = -1;   // panel index for Marker nodes
  ExprPtr lhs;
  ExprPtr rhs;

  static ExprPtr make_marker(std::string name, int index) {
    return std::make_shared<const GateExpr>(GateExpr{Kind::Marker, std::move(name), index, nullptr, nullptr});
  }
  static ExprPtr make_group(std::string name) {
    return std::make_shared<const GateExpr>(GateExpr{Kind::GroupRef, std::move(name), -1, nullptr, nullptr});
  }
  static ExprPtr make_not(ExprPtr e) {
    return std::make_shared<const GateExpr>(GateExpr{Kind::Not, {}, -1, std::move(e), nullptr});
  }
  static ExprPtr make_and(ExprPtr a, ExprPtr b) {
    return std::make_shared<const GateExpr>(GateExpr{Kind::And, {}, -1, std::move(a), std::move(b)});
  }
  static ExprPtr make_or(ExprPtr a, ExprPtr b) {
    return std::make_shared<const GateExpr>(GateExpr{Kind::Or, {}, -1, std::move(a), std::move(b)});
  }
};

inline bool structurally_equal(const GateExpr& a, const GateExpr& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case GateExpr::Kind::Marker:
      return a.name == b.name && a.marker == b.marker;
    case GateExpr::Kind::GroupRef:
      return a.name == b.name;
    case GateExpr::Kind::Not:
      return structurally_equal(*a.lhs, *b.lhs);
    case GateExpr::Kind::And:
    case GateExpr::Kind::Or:
      return structurally_equal(*a.lhs, *b.lhs) && structurally_equal(*a.rhs, *b.rhs);
  }
  return false;
}

enum class StepKind { Define, Exclude, Annotate };

inline const char* to_string(StepKind k) {
  switch (k) {
    case StepKind::Define: return "group";
    case StepKind::Exclude: return "exclude";
    case StepKind::Annotate: return "annotate";
  }
  return "?";
}

struct RuleStep {
  int index = 0;        // 1-based, contiguous
  StepKind kind = StepKind::Define;
  std::string name;     // group name (Define) or class name (Annotate)
  ExprPtr expr;
  std::string purpose;
  int line = 0;         // source line, 0 when built programmatically
};

/// A validated gating program: a marker panel plus ordered steps.
class RuleProgram {
public:
  RuleProgram() = default;

  const std::vector<MarkerId>& panel() const noexcept { return panel_; }
  const std::vector<RuleStep>& steps() const noexcept { return steps_; }
  const std::vector<std::string>& classes() const noexcept { return classes_; }

  std::optional<int> marker_index(std::string_view name) const {
    for (const auto& m : panel_)
      if (m.name == name) return m.index;
    return std::nullopt;
  }

  std::optional<int> class_index(std::string_view name) const {
    for (std::size_t i = 0; i < classes_.size(); ++i)
      if (classes_[i] == name) return static_cast<int>(i);
    return std::nullopt;
  }

  /// Expression of a defined group, or null.
  const GateExpr* group(std::string_view name) const {
    auto it = groups_.find(name);
    return it == groups_.end() ? nullptr : it->second.get();
  }

  const RuleStep& step(int index) const { return steps_.at(static_cast<std::size_t>(index - 1)); }

  /// Bitmask over panel indices of markers reachable from any step,
  /// following group references. Panels wider than 64 are not representable.
  std::uint64_t referenced_mask() const noexcept { return referenced_; }

  std::vector<MarkerId> referenced_markers() const {
    const std::uint64_t mask = referenced_mask();
    std::vector<MarkerId> out;
    for (const auto& m : panel_)
      if (m.index < 64 && ((mask >> m.index) & 1U)) out.push_back(m);
    return out;
  }

  std::uint64_t panel_mask() const noexcept {
    return panel_.size() >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << panel_.size()) - 1);
  }

  /// Validating constructor used by the parser and by programmatic builders.
  static RuleProgram build(std::vector<MarkerId> panel, std::vector<RuleStep> steps);

private:
  void collect_markers(const GateExpr& e, std::uint64_t& mask) const {
    switch (e.kind) {
      case GateExpr::Kind::Marker:
        if (e.marker < 64) mask |= std::uint64_t{1} << e.marker;
        break;
      case GateExpr::Kind::GroupRef:
        if (const GateExpr* g = group(e.name)) collect_markers(*g, mask);
        break;
      case GateExpr::Kind::Not:
        collect_markers(*e.lhs, mask);
        break;
      case GateExpr::Kind::And:
      case GateExpr::Kind::Or:
        collect_markers(*e.lhs, mask);
        collect_markers(*e.rhs, mask);
        break;
    }
  }

  std::vector<MarkerId> panel_;
  std::vector<RuleStep> steps_;
  std::vector<std::string> classes_;
  std::map<std::string, ExprPtr, std::less<>> groups_;
  std::uint64_t referenced_ = 0;
};

namespace detail {

inline void validate_expr(const GateExpr& e, const std::vector<MarkerId>& panel,
                          const std::map<std::string, int, std::less<>>& groups_so_far,
                          const std::map<std::string, int, std::less<>>& all_groups, int line) {
  switch (e.kind) {
    case GateExpr::Kind::Marker: {
      const bool ok = e.marker >= 0 && static_cast<std::size_t>(e.marker) < panel.size() &&
                      panel[static_cast<std::size_t>(e.marker)].name == e.name;
      if (!ok) throw SemanticError(line, "undefined marker '" + e.name + "'");
      break;
    }
    case GateExpr::Kind::GroupRef:
      if (!groups_so_far.count(e.name)) {
        if (all_groups.count(e.name))
          throw SemanticError(line, "forward reference to group '" + e.name + "'");
        throw SemanticError(line, "undefined marker or group '" + e.name + "'");
      }
      break;
    case GateExpr::Kind::Not:
      validate_expr(*e.lhs, panel, groups_so_far, all_groups, line);
      break;
    case GateExpr::Kind::And:
    case GateExpr::Kind::Or:
      validate_expr(*e.lhs, panel, groups_so_far, all_groups, line);
      validate_expr(*e.rhs, panel, groups_so_far, all_groups, line);
      break;
  }
}

}  // namespace detail

inline RuleProgram RuleProgram::build(std::vector<MarkerId> panel, std::vector<RuleStep> steps) {
  for (std::size_t i = 0; i < panel.size(); ++i) {
    if (panel[i].index != static_cast<int>(i))
      throw SemanticError(0, "panel marker '" + panel[i].name + "' has out-of-order index");
    for (std::size_t j = 0; j < i; ++j)
      if (panel[j].name == panel[i].name)
        throw SemanticError(0, "duplicate panel marker '" + panel[i].name + "'");
  }

  std::map<std::string, int, std::less<>> all_groups;
  for (const auto& s : steps)
    if (s.kind == StepKind::Define && !all_groups.count(s.name)) all_groups.emplace(s.name, s.index);

  std::map<std::string, int, std::less<>> groups_so_far;
  std::vector<std::string> classes;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    auto& s = steps[i];
    if (s.index != static_cast<int>(i) + 1)
      throw SemanticError(s.line, "step indices must be contiguous from 1");
    if (!s.expr) throw SemanticError(s.line, "step without expression");
    detail::validate_expr(*s.expr, panel, groups_so_far, all_groups, s.line);
    if (s.kind == StepKind::Define) {
      if (groups_so_far.count(s.name)) throw SemanticError(s.line, "group '" + s.name + "' redefined");
      for (const auto& m : panel)
        if (m.name == s.name) throw SemanticError(s.line, "group '" + s.name + "' shadows a panel marker");
      groups_so_far.emplace(s.name, s.index);
    } else if (s.kind == StepKind::Annotate) {
      if (std::find(classes.begin(), classes.end(), s.name) != classes.end())
        throw SemanticError(s.line, "duplicate class name '" + s.name + "'");
      classes.push_back(s.name);
    }
  }

  RuleProgram p;
  p.panel_ = std::move(panel);
  p.steps_ = std::move(steps);
  p.classes_ = std::move(classes);
  for (const auto& s : p.steps_)
    if (s.kind == StepKind::Define) p.groups_.emplace(s.name, s.expr);
  for (const auto& s : p.steps_) p.collect_markers(*s.expr, p.referenced_);
  return p;
}

inline bool structurally_equal(const RuleProgram& a, const RuleProgram& b) {
  if (a.panel() != b.panel() || a.classes() != b.classes() || a.steps().size() != b.steps().size())
    return false;
  for (std::size_t i = 0; i < a.steps().size(); ++i) {
    const auto& x = a.steps()[i];
    const auto& y = b.steps()[i];
    if (x.index != y.index || x.kind != y.kind || x.name != y.name || x.purpose != y.purpose ||
        !structurally_equal(*x.expr, *y.expr))
      return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

struct Token {
  enum class Type { Ident, Quoted, Assign, Or, And, Not, LParen, RParen, Comma, End };
  Type type;
  std::string text;
  int column;
};

inline bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
inline bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

// Splits off a trailing comment outside of quotes.
inline std::pair<std::string_view, std::string_view> split_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (!quoted && line[i] == '#') return {line.substr(0, i), line.substr(i + 1)};
  }
  return {line, {}};
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<Token> tokenize(std::string_view text, int line_no) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    const int col = static_cast<int>(i) + 1;
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == ':' ) {
      if (i + 1 < text.size() && text[i + 1] == '=') {
        out.push_back({Token::Type::Assign, ":=", col});
        i += 2;
      } else {
        throw SyntaxError(line_no, col, "expected ':='");
      }
    } else if (c == '|') {
      out.push_back({Token::Type::Or, "|", col});
      ++i;
    } else if (c == '&') {
      out.push_back({Token::Type::And, "&", col});
      ++i;
    } else if (c == '!') {
      out.push_back({Token::Type::Not, "!", col});
      ++i;
    } else if (c == '(') {
      out.push_back({Token::Type::LParen, "(", col});
      ++i;
    } else if (c == ')') {
      out.push_back({Token::Type::RParen, ")", col});
      ++i;
    } else if (c == ',') {
      out.push_back({Token::Type::Comma, ",", col});
      ++i;
    } else if (c == '"') {
      const std::size_t close = text.find('"', i + 1);
      if (close == std::string_view::npos) throw SyntaxError(line_no, col, "unterminated quoted identifier");
      std::string name(text.substr(i + 1, close - i - 1));
      if (name.empty()) throw SyntaxError(line_no, col, "empty quoted identifier");
      out.push_back({Token::Type::Quoted, std::move(name), col});
      i = close + 1;
    } else if (is_ident_start(c)) {
      std::size_t j = i;
      while (j < text.size() && is_ident_char(text[j])) ++j;
      out.push_back({Token::Type::Ident, std::string(text.substr(i, j - i)), col});
      i = j;
    } else {
      throw SyntaxError(line_no, col, std::string("unexpected character '") + c + "'");
    }
  }
  out.push_back({Token::Type::End, "", static_cast<int>(text.size()) + 1});
  return out;
}

// Raw expression tree before name resolution: identifiers are kept as names.
struct RawExpr {
  enum class Kind { Ident, Not, And, Or };
  Kind kind;
  std::string name;
  int column = 0;
  std::unique_ptr<RawExpr> lhs, rhs;
};

class LineParser {
public:
  LineParser(std::vector<Token> tokens, int line) : toks_(std::move(tokens)), line_(line) {}

  const Token& peek() const { return toks_[pos_]; }
  Token take() { return toks_[pos_++]; }

  bool accept(Token::Type t) {
    if (peek().type == t) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(Token::Type t, const char* what) {
    if (!accept(t)) fail(std::string("expected ") + what);
  }

  [[noreturn]] void fail(const std::string& msg) const {
    const Token& t = peek();
    throw SyntaxError(line_, t.column, msg + (t.type == Token::Type::End ? " at end of line" : " near '" + t.text + "'"));
  }

  std::string name() {
    const Token& t = peek();
    if (t.type != Token::Type::Ident && t.type != Token::Type::Quoted) fail("expected identifier");
    return take().text;
  }

  std::unique_ptr<RawExpr> expr() {
    auto lhs = term();
    while (accept(Token::Type::Or)) {
      auto node = std::make_unique<RawExpr>();
      node->kind = RawExpr::Kind::Or;
      node->lhs = std::move(lhs);
      node->rhs = term();
      lhs = std::move(node);
    }
    return lhs;
  }

  std::unique_ptr<RawExpr> term() {
    auto lhs = factor();
    while (accept(Token::Type::And)) {
      auto node = std::make_unique<RawExpr>();
      node->kind = RawExpr::Kind::And;
      node->lhs = std::move(lhs);
      node->rhs = factor();
      lhs = std::move(node);
    }
    return lhs;
  }

  std::unique_ptr<RawExpr> factor() {
    if (accept(Token::Type::Not)) {
      auto node = std::make_unique<RawExpr>();
      node->kind = RawExpr::Kind::Not;
      node->lhs = factor();
      return node;
    }
    if (accept(Token::Type::LParen)) {
      auto inner = expr();
      expect(Token::Type::RParen, "')'");
      return inner;
    }
    const Token& t = peek();
    if (t.type == Token::Type::Ident || t.type == Token::Type::Quoted) {
      auto node = std::make_unique<RawExpr>();
      node->kind = RawExpr::Kind::Ident;
      node->column = t.column;
      node->name = take().text;
      return node;
    }
    fail("expected marker, group, '!' or '('");
  }

  bool at_end() const { return peek().type == Token::Type::End; }

private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  int line_;
};

struct RawStep {
  StepKind kind;
  std::string name;
  std::unique_ptr<RawExpr> expr;
  std::string purpose;
  int line;
};

inline ExprPtr resolve(const RawExpr& raw, const std::vector<MarkerId>& panel,
                       const std::map<std::string, int, std::less<>>& groups_so_far,
                       const std::map<std::string, int, std::less<>>& all_groups, int line) {
  switch (raw.kind) {
    case RawExpr::Kind::Ident: {
      if (groups_so_far.count(raw.name)) return GateExpr::make_group(raw.name);
      for (const auto& m : panel)
        if (m.name == raw.name) return GateExpr::make_marker(m.name, m.index);
      if (all_groups.count(raw.name))
        throw SemanticError(line, "forward reference to group '" + raw.name + "'");
      throw SemanticError(line, "undefined marker or group '" + raw.name + "'");
    }
    case RawExpr::Kind::Not:
      return GateExpr::make_not(resolve(*raw.lhs, panel, groups_so_far, all_groups, line));
    case RawExpr::Kind::And:
      return GateExpr::make_and(resolve(*raw.lhs, panel, groups_so_far, all_groups, line),
                                resolve(*raw.rhs, panel, groups_so_far, all_groups, line));
    case RawExpr::Kind::Or:
      return GateExpr::make_or(resolve(*raw.lhs, panel, groups_so_far, all_groups, line),
                               resolve(*raw.rhs, panel, groups_so_far, all_groups, line));
  }
  return nullptr;
}

}  // namespace detail

/// The 17-stain annotation panel in acquisition-list order. Used when a
/// program has no `panel` line.
inline std::vector<MarkerId> default_panel() {
  static const char* const names[] = {"NaKATPase", "PanCK", "Muc2", "CgA", "Vimentin", "DAPI",
                                      "SMA", "Sox9", "OLFM4", "Lysozyme", "CD45", "CD20",
                                      "CD68", "CD11B", "CD3d", "CD8", "CD4"};
  std::vector<MarkerId> out;
  int i = 0;
  for (const char* n : names) out.push_back({n, i++});
  return out;
}

inline RuleProgram parse_rule_program(std::string_view source) {
  std::optional<std::vector<MarkerId>> panel;
  std::vector<detail::RawStep> raw_steps;

  int line_no = 0;
  std::size_t start = 0;
  while (start <= source.size()) {
    std::size_t end = source.find('\n', start);
    if (end == std::string_view::npos) end = source.size();
    std::string_view line = source.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    start = end + 1;

    auto [code, comment] = detail::split_comment(line);
    auto tokens = detail::tokenize(code, line_no);
    if (tokens.front().type == detail::Token::Type::End) {
      if (end == source.size()) break;
      continue;
    }

    detail::LineParser p(std::move(tokens), line_no);
    const detail::Token head = p.peek();
    if (head.type != detail::Token::Type::Ident)
      p.fail("expected 'panel', 'group', 'exclude' or 'annotate'");
    p.take();

    if (head.text == "panel") {
      if (panel) throw SyntaxError(line_no, head.column, "panel declared twice");
      if (!raw_steps.empty()) throw SyntaxError(line_no, head.column, "panel must precede all steps");
      std::vector<MarkerId> markers;
      do {
        const int col = p.peek().column;
        std::string n = p.name();
        for (const auto& m : markers)
          if (m.name == n) throw SemanticError(line_no, "duplicate panel marker '" + n + "' (column " + std::to_string(col) + ")");
        markers.push_back({std::move(n), static_cast<int>(markers.size())});
      } while (p.accept(detail::Token::Type::Comma));
      if (!p.at_end()) p.fail("expected ',' or end of line");
      panel = std::move(markers);
    } else if (head.text == "group" || head.text == "annotate") {
      detail::RawStep s;
      s.kind = head.text == "group" ? StepKind::Define : StepKind::Annotate;
      s.name = p.name();
      p.expect(detail::Token::Type::Assign, "':='");
      s.expr = p.expr();
      if (!p.at_end()) p.fail("unexpected token");
      s.purpose = detail::trim(comment);
      s.line = line_no;
      raw_steps.push_back(std::move(s));
    } else if (head.text == "exclude") {
      detail::RawStep s;
      s.kind = StepKind::Exclude;
      s.expr = p.expr();
      if (!p.at_end()) p.fail("unexpected token");
      s.purpose = detail::trim(comment);
      s.line = line_no;
      raw_steps.push_back(std::move(s));
    } else {
      throw SyntaxError(line_no, head.column, "unknown statement '" + head.text + "'");
    }
    if (end == source.size()) break;
  }

  std::vector<MarkerId> markers = panel ? std::move(*panel) : default_panel();

  std::map<std::string, int, std::less<>> all_groups;
  for (std::size_t i = 0; i < raw_steps.size(); ++i)
    if (raw_steps[i].kind == StepKind::Define) all_groups.emplace(raw_steps[i].name, static_cast<int>(i) + 1);

  std::map<std::string, int, std::less<>> groups_so_far;
  std::vector<RuleStep> steps;
  for (std::size_t i = 0; i < raw_steps.size(); ++i) {
    auto& r = raw_steps[i];
    RuleStep s;
    s.index = static_cast<int>(i) + 1;
    s.kind = r.kind;
    s.name = r.name;
    s.purpose = r.purpose;
    s.line = r.line;
    s.expr = detail::resolve(*r.expr, markers, groups_so_far, all_groups, r.line);
    if (s.kind == StepKind::Define) groups_so_far.emplace(s.name, s.index);
    steps.push_back(std::move(s));
  }
  return RuleProgram::build(std::move(markers), std::move(steps));
}

// ---------------------------------------------------------------------------
// Pretty printing

namespace detail {

inline std::string format_name(const std::string& n) {
  bool plain = !n.empty() && is_ident_start(n[0]);
  for (char c : n) plain = plain && is_ident_char(c);
  return plain ? n : "\"" + n + "\"";
}

// prec: 0 = or-level, 1 = and-level, 2 = factor.
inline void print_expr(std::ostream& os, const GateExpr& e, int prec) {
  switch (e.kind) {
    case GateExpr::Kind::Marker:
    case GateExpr::Kind::GroupRef:
      os << format_name(e.name);
      break;
    case GateExpr::Kind::Not:
      os << '!';
      print_expr(os, *e.lhs, 2);
      break;
    case GateExpr::Kind::And:
      if (prec > 1) os << '(';
      print_expr(os, *e.lhs, 1);
      os << " & ";
      print_expr(os, *e.rhs, 2);
      if (prec > 1) os << ')';
      break;
    case GateExpr::Kind::Or:
      if (prec > 0) os << '(';
      print_expr(os, *e.lhs, 0);
      os << " | ";
      print_expr(os, *e.rhs, 1);
      if (prec > 0) os << ')';
      break;
  }
}

}  // namespace detail

inline std::string to_string(const GateExpr& e) {
  std::ostringstream os;
  detail::print_expr(os, e, 0);
  return os.str();
}

/// Canonical text form; always includes an explicit panel line.
inline std::string pretty_print(const RuleProgram& program) {
  std::ostringstream os;
  os << "panel ";
  for (std::size_t i = 0; i < program.panel().size(); ++i) {
    if (i) os << ", ";
    os << detail::format_name(program.panel()[i].name);
  }
  os << '\n';
  for (const auto& s : program.steps()) {
    os << to_string(s.kind) << ' ';
    if (s.kind != StepKind::Exclude) os << detail::format_name(s.name) << " := ";
    detail::print_expr(os, *s.expr, 0);
    if (!s.purpose.empty()) os << "  # " << s.purpose;
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Naive tree-walking evaluation. Kept deliberately simple; it is the
// reference the compiled form is checked against.

inline bool eval_naive(const GateExpr& e, std::uint64_t bits, const RuleProgram& program) {
  switch (e.kind) {
    case GateExpr::Kind::Marker:
      return ((bits >> e.marker) & 1U) != 0;
    case GateExpr::Kind::GroupRef:
      return eval_naive(*program.group(e.name), bits, program);
    case GateExpr::Kind::Not:
      return !eval_naive(*e.lhs, bits, program);
    case GateExpr::Kind::And:
      return eval_naive(*e.lhs, bits, program) && eval_naive(*e.rhs, bits, program);
    case GateExpr::Kind::Or:
      return eval_naive(*e.lhs, bits, program) || eval_naive(*e.rhs, bits, program);
  }
  return false;
}

// ---------------------------------------------------------------------------
// Compilation to a straight-line bitwise tape.
//
// Each register is a 64-bit word holding one boolean per lane, so a single
// pass over the tape evaluates 64 gate vectors. Registers [0, panel) hold the
// transposed marker bits; groups are lowered once into a register and reused
// wherever referenced.

struct Instr {
  enum class Op : std::uint8_t { Not, And, Or };
  Op op;
  std::uint16_t dst;
  std::uint16_t a;
  std::uint16_t b;
};

struct CompiledAction {
  StepKind kind;         // Exclude or Annotate
  int step = 0;          // 1-based step index
  int class_index = -1;  // Annotate only
  std::uint16_t reg = 0;
};

inline constexpr std::size_t kMaxRegisters = 2048;

class CompiledProgram {
public:
  const std::vector<Instr>& tape() const noexcept { return tape_; }
  const std::vector<CompiledAction>& actions() const noexcept { return actions_; }
  const std::vector<std::string>& classes() const noexcept { return classes_; }
  const std::vector<MarkerId>& panel() const noexcept { return panel_; }
  std::size_t register_count() const noexcept { return registers_; }
  std::size_t panel_size() const noexcept { return panel_.size(); }
  std::uint64_t panel_mask() const noexcept { return panel_mask_; }
  std::uint64_t referenced_mask() const noexcept { return referenced_; }
  std::size_t step_count() const noexcept { return step_count_; }

  std::size_t annotate_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(actions_.begin(), actions_.end(), [](const auto& a) {
      return a.kind == StepKind::Annotate;
    }));
  }

private:
  friend CompiledProgram compile_program(const RuleProgram& program);

  std::vector<Instr> tape_;
  std::vector<CompiledAction> actions_;
  std::vector<std::string> classes_;
  std::vector<MarkerId> panel_;
  std::size_t registers_ = 0;
  std::size_t step_count_ = 0;
  std::uint64_t panel_mask_ = 0;
  std::uint64_t referenced_ = 0;
};

namespace detail {

class TapeBuilder {
public:
  TapeBuilder(std::vector<Instr>& tape, std::size_t first_free) : tape_(tape), next_(first_free) {}

  std::uint16_t lower(const GateExpr& e, const std::map<std::string, std::uint16_t, std::less<>>& groups) {
    switch (e.kind) {
      case GateExpr::Kind::Marker:
        return static_cast<std::uint16_t>(e.marker);
      case GateExpr::Kind::GroupRef:
        return groups.find(e.name)->second;
      case GateExpr::Kind::Not: {
        const auto a = lower(*e.lhs, groups);
        return emit(Instr::Op::Not, a, a);
      }
      case GateExpr::Kind::And: {
        const auto a = lower(*e.lhs, groups);
        const auto b = lower(*e.rhs, groups);
        return emit(Instr::Op::And, a, b);
      }
      case GateExpr::Kind::Or: {
        const auto a = lower(*e.lhs, groups);
        const auto b = lower(*e.rhs, groups);
        return emit(Instr::Op::Or, a, b);
      }
    }
    return 0;
  }

  std::size_t registers() const noexcept { return next_; }

private:
  std::uint16_t emit(Instr::Op op, std::uint16_t a, std::uint16_t b) {
    if (next_ >= kMaxRegisters) throw CapacityError("rule program needs more than " + std::to_string(kMaxRegisters) + " registers");
    const auto dst = static_cast<std::uint16_t>(next_++);
    tape_.push_back({op, dst, a, b});
    return dst;
  }

  std::vector<Instr>& tape_;
  std::size_t next_;
};

}  // namespace detail

inline CompiledProgram compile_program(const RuleProgram& program) {
  if (program.panel().size() > static_cast<std::size_t>(kMaxPanelMarkers))
    throw CapacityError("panel has " + std::to_string(program.panel().size()) + " markers; at most 64 supported");

  CompiledProgram out;
  out.panel_ = program.panel();
  out.classes_ = program.classes();
  out.panel_mask_ = program.panel_mask();
  out.referenced_ = program.referenced_mask();
  out.step_count_ = program.steps().size();

  detail::TapeBuilder builder(out.tape_, program.panel().size());
  std::map<std::string, std::uint16_t, std::less<>> groups;
  int class_index = 0;
  for (const auto& s : program.steps()) {
    const std::uint16_t reg = builder.lower(*s.expr, groups);
    switch (s.kind) {
      case StepKind::Define:
        groups.emplace(s.name, reg);
        break;
      case StepKind::Exclude:
        out.actions_.push_back({StepKind::Exclude, s.index, -1, reg});
        break;
      case StepKind::Annotate:
        out.actions_.push_back({StepKind::Annotate, s.index, class_index++, reg});
        break;
    }
  }
  out.registers_ = std::max<std::size_t>(builder.registers(), 1);
  return out;
}

}  // namespace mxgate
