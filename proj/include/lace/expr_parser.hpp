#pragma once

// Text syntax for energy expressions.
//
//   expr    := "" | node
//   node    := leaf
//            | "AND" "(" node ("," node)* ")"
//            | "OR"  "(" node "," node ("," node)* [";" "beta" "=" number] ")"
//            | "NOT" "(" node "," node [";" "alpha" "=" ("adaptive" | number)] ")"
//   leaf    := name "=" number ["[" opt ("," opt)* "]"]
//   opt     := ("T" | "w") "=" number
//   number  := decimal literal | "ln" decimal literal
//
// Keywords are case-insensitive. An empty expression means the empty code.

#include <cctype>
#include <charconv>
#include <cmath>
#include <string>
#include <string_view>

#include "lace/csv.hpp"
#include "lace/energy.hpp"
#include "lace/errors.hpp"
#include "lace/worldgen.hpp"

namespace lace {

namespace detail {

class ExprParser {
 public:
  ExprParser(std::string_view text, const AttributeSpec& spec) : s_(text), spec_(spec) {}

  EnergyExpr parse() {
    EnergyExpr e;
    skip();
    if (pos_ == s_.size()) return e;
    e.root = node();
    skip();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    validate_expr(e, spec_);
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  std::string identifier() {
    skip();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
    if (start == pos_) fail("expected a name");
    return std::string(s_.substr(start, pos_ - start));
  }

  static std::string upper(std::string v) {
    for (auto& c : v) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return v;
  }

  double number() {
    skip();
    bool log = false;
    if (s_.substr(pos_, 2) == "ln") {
      log = true;
      pos_ += 2;
    }
    const std::size_t start = pos_;
    double v = 0.0;
    auto [end, ec] = std::from_chars(s_.data() + pos_, s_.data() + s_.size(), v);
    if (ec != std::errc{}) fail("expected a number");
    pos_ = static_cast<std::size_t>(end - s_.data());
    if (log) {
      if (!(v > 0.0)) {
        pos_ = start;
        fail("ln needs a positive argument");
      }
      v = std::log(v);
    }
    return v;
  }

  ExprNode node() {
    skip();
    const std::size_t start = pos_;
    const std::string name = identifier();
    const std::string kw = upper(name);
    skip();
    const bool call = pos_ < s_.size() && s_[pos_] == '(';
    if (call && (kw == "AND" || kw == "OR" || kw == "NOT")) {
      expect('(');
      std::vector<ExprNode> kids;
      kids.push_back(node());
      while (accept(',')) kids.push_back(node());
      ExprNode n;
      if (kw == "AND") {
        n = ExprNode::all_of(std::move(kids));
      } else if (kw == "OR") {
        if (kids.size() < 2) fail("OR needs at least two operands");
        n = ExprNode::any_of(std::move(kids));
        if (accept(';')) {
          option_name("beta");
          n.beta = number();
        }
      } else {
        if (kids.size() != 2) fail("NOT takes exactly two operands");
        n = ExprNode::negate(std::move(kids[0]), std::move(kids[1]));
        if (accept(';')) {
          option_name("alpha");
          skip();
          if (upper(std::string(s_.substr(pos_, 8))) == "ADAPTIVE") {
            pos_ += 8;
          } else {
            const std::size_t at = pos_;
            n.alpha_policy = AlphaPolicy::Fixed;
            n.alpha = number();
            if (!(n.alpha >= 0.0)) {
              pos_ = at;
              fail("alpha must be >= 0");
            }
          }
        }
      }
      expect(')');
      return n;
    }
    const auto attr = spec_.find(name);
    if (!attr) {
      pos_ = start;
      fail("unknown attribute '" + name + "'");
    }
    expect('=');
    const std::size_t value_at = (skip(), pos_);
    ExprNode leaf = ExprNode::leaf(*attr, number());
    try {
      spec_.check_value(*attr, leaf.target);
    } catch (const ArgumentError& e) {
      pos_ = value_at;
      fail(e.what());
    }
    if (accept('[')) {
      do {
        const std::size_t at = (skip(), pos_);
        const std::string key = identifier();
        expect('=');
        const double v = number();
        if (key == "T") {
          if (!(v > 0.0)) {
            pos_ = at;
            fail("temperature must be positive");
          }
          leaf.temperature = v;
        } else if (key == "w") {
          leaf.weight = v;
        } else {
          pos_ = at;
          fail("unknown leaf option '" + key + "'");
        }
      } while (accept(','));
      expect(']');
    }
    return leaf;
  }

  void option_name(const char* want) {
    const std::size_t at = (skip(), pos_);
    const std::string key = identifier();
    if (key != want) {
      pos_ = at;
      fail(std::string("expected option '") + want + "'");
    }
    expect('=');
  }

  std::string_view s_;
  const AttributeSpec& spec_;
  std::size_t pos_ = 0;
};

inline std::string node_text(const ExprNode& n, const AttributeSpec& spec) {
  switch (n.kind) {
    case NodeKind::Leaf: {
      std::string out = spec[n.attr].name + "=" + format_double(n.target);
      std::vector<std::string> opts;
      if (n.temperature != 1.0) opts.push_back("T=" + format_double(n.temperature));
      if (n.weight != 1.0) opts.push_back("w=" + format_double(n.weight));
      if (!opts.empty()) {
        out += "[";
        for (std::size_t k = 0; k < opts.size(); ++k) out += (k ? "," : "") + opts[k];
        out += "]";
      }
      return out;
    }
    case NodeKind::And:
    case NodeKind::Or:
    case NodeKind::Not: {
      std::string out = n.kind == NodeKind::And ? "AND(" : n.kind == NodeKind::Or ? "OR(" : "NOT(";
      for (std::size_t k = 0; k < n.children.size(); ++k) out += (k ? ", " : "") + node_text(n.children[k], spec);
      if (n.kind == NodeKind::Or) {
        out += "; beta=" + (n.beta == kLn20 ? std::string("ln20") : format_double(n.beta));
      } else if (n.kind == NodeKind::Not) {
        out += "; alpha=" + (n.alpha_policy == AlphaPolicy::Adaptive ? std::string("adaptive") : format_double(n.alpha));
      }
      return out + ")";
    }
  }
  return {};
}

}  // namespace detail

// Throws ParseError (with the byte position) on malformed input.
inline EnergyExpr parse_expr(std::string_view text, const AttributeSpec& spec) {
  return detail::ExprParser(text, spec).parse();
}

// Canonical text; parse_expr(expr_text(e)) reproduces e.
inline std::string expr_text(const EnergyExpr& e, const AttributeSpec& spec) {
  return e.root ? detail::node_text(*e.root, spec) : std::string();
}

// "attr0=1,attr1=3" -> code with those entries present.
inline AttributeCode parse_code(std::string_view text, const AttributeSpec& spec) {
  AttributeCode code(spec.size());
  std::size_t offset = 0;
  for (const auto& part : split(text, ',')) {
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ParseError("expected name=value", offset);
    const auto name = trim(part.substr(0, eq));
    const auto attr = spec.find(name);
    if (!attr) throw ParseError("unknown attribute '" + name + "'", offset);
    const auto value_text = trim(part.substr(eq + 1));
    double v = 0.0;
    auto [end, ec] = std::from_chars(value_text.data(), value_text.data() + value_text.size(), v);
    if (ec != std::errc{} || end != value_text.data() + value_text.size()) {
      throw ParseError("expected a number", offset + eq + 1);
    }
    try {
      spec.check_value(*attr, v);
    } catch (const ArgumentError& e) {
      throw ParseError(e.what(), offset + eq + 1);
    }
    code[*attr] = v;
    offset += part.size() + 1;
  }
  return code;
}

}  // namespace lace
