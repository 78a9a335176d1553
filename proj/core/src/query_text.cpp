#include "hyq/query_text.hpp"

#include <cctype>
#include <sstream>

#include "hyq/error.hpp"
#include "hyq/text_util.hpp"

namespace hyq {
namespace {

enum class Tok { Ident, Number, String, Symbol, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  std::size_t pos = 0;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::vector<Token> tokenize(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '-' && i + 1 < s.size() && s[i + 1] == '-') {  // line comment
      while (i < s.size() && s[i] != '\n') ++i;
      continue;
    }
    Token t;
    t.pos = i;
    if (ident_start(c)) {
      const std::size_t start = i;
      while (i < s.size() && ident_char(s[i])) ++i;
      t.kind = Tok::Ident;
      t.text = std::string(s.substr(start, i - start));
    } else if (digit(c) || ((c == '-' || c == '.') && i + 1 < s.size() && (digit(s[i + 1]) || s[i + 1] == '.'))) {
      const std::size_t start = i;
      ++i;
      while (i < s.size()) {
        const char d = s[i];
        if (digit(d) || d == '.') {
          ++i;
        } else if ((d == 'e' || d == 'E') && i + 1 < s.size()) {
          ++i;
          if (s[i] == '+' || s[i] == '-') ++i;
        } else {
          break;
        }
      }
      t.kind = Tok::Number;
      t.text = std::string(s.substr(start, i - start));
    } else if (c == '\'') {
      ++i;
      std::string value;
      while (true) {
        if (i >= s.size()) fail(ErrorCode::ParseError, "unterminated string literal");
        if (s[i] == '\'') {
          if (i + 1 < s.size() && s[i + 1] == '\'') {
            value.push_back('\'');
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        value.push_back(s[i++]);
      }
      t.kind = Tok::String;
      t.text = std::move(value);
    } else {
      static constexpr std::string_view kMulti[] = {"<->", "<=", ">="};
      t.kind = Tok::Symbol;
      for (auto m : kMulti) {
        if (s.substr(i, m.size()) == m) t.text = std::string(m);
      }
      if (t.text.empty()) {
        if (std::string_view("()[],;*+=<>").find(c) == std::string_view::npos) {
          fail(ErrorCode::ParseError, "unexpected character '" + std::string(1, c) + "' at " + std::to_string(i));
        }
        t.text = std::string(1, c);
      }
      i += t.text.size();
    }
    out.push_back(std::move(t));
  }
  out.push_back(Token{Tok::End, "", s.size()});
  return out;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : toks_(tokenize(text)) {}

  Statement statement() {
    Statement st;
    while (keyword_is("SET")) {
      ++pos_;
      std::string name = ident();
      symbol("=");
      const Token& v = next();
      if (v.kind == Tok::End || v.kind == Tok::Symbol) error("setting value expected");
      st.settings.emplace_back(std::move(name), v.text);
      symbol(";");
    }
    keyword("SELECT");
    if (upper(ident()) != "ID") error("only `SELECT id` is supported");
    keyword("FROM");
    st.table = ident();
    if (keyword_is("WHERE")) {
      ++pos_;
      st.predicates.push_back(predicate());
      while (keyword_is("AND")) {
        ++pos_;
        st.predicates.push_back(predicate());
      }
    }
    keyword("ORDER");
    keyword("BY");
    st.order.push_back(term());
    while (symbol_is("+")) {
      ++pos_;
      st.order.push_back(term());
    }
    keyword("LIMIT");
    st.limit = static_cast<std::size_t>(parse_u64(expect(Tok::Number, "LIMIT count").text));
    if (keyword_is("WITH")) {
      ++pos_;
      keyword("RECALL");
      st.target_recall = parse_double(expect(Tok::Number, "recall value").text);
    }
    if (symbol_is(";")) ++pos_;
    if (peek().kind != Tok::End) error("trailing input");
    return st;
  }

 private:
  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorCode::ParseError, what + " at offset " + std::to_string(peek().pos) + " near '" + peek().text + "'");
  }

  bool keyword_is(std::string_view kw) const { return peek().kind == Tok::Ident && upper(peek().text) == kw; }
  bool symbol_is(std::string_view s) const { return peek().kind == Tok::Symbol && peek().text == s; }

  void keyword(std::string_view kw) {
    if (!keyword_is(kw)) error("expected " + std::string(kw));
    ++pos_;
  }
  void symbol(std::string_view s) {
    if (!symbol_is(s)) error("expected '" + std::string(s) + "'");
    ++pos_;
  }
  const Token& expect(Tok kind, std::string_view what) {
    if (peek().kind != kind) error(std::string(what) + " expected");
    return next();
  }
  std::string ident() { return expect(Tok::Ident, "identifier").text; }

  ScalarValue literal() {
    if (peek().kind == Tok::String) return next().text;
    return parse_double(expect(Tok::Number, "literal").text);
  }

  Predicate predicate() {
    Predicate p;
    p.column = ident();
    if (keyword_is("BETWEEN")) {
      ++pos_;
      p.op = CompareOp::Between;
      p.operand = parse_double(expect(Tok::Number, "lower bound").text);
      keyword("AND");
      p.upper = parse_double(expect(Tok::Number, "upper bound").text);
      return p;
    }
    const Token& op = expect(Tok::Symbol, "comparison operator");
    if (op.text == "=") p.op = CompareOp::Eq;
    else if (op.text == "<") p.op = CompareOp::Lt;
    else if (op.text == "<=") p.op = CompareOp::Le;
    else if (op.text == ">") p.op = CompareOp::Gt;
    else if (op.text == ">=") p.op = CompareOp::Ge;
    else error("unknown comparison operator");
    p.operand = literal();
    return p;
  }

  OrderTerm term() {
    OrderTerm t;
    if (peek().kind == Tok::Number) {
      t.weight = parse_double(next().text);
      symbol("*");
    }
    const bool paren = symbol_is("(");
    if (paren) ++pos_;
    t.column = ident();
    symbol("<->");
    symbol("[");
    if (!symbol_is("]")) {
      t.vector.push_back(parse_float(expect(Tok::Number, "vector component").text));
      while (symbol_is(",")) {
        ++pos_;
        t.vector.push_back(parse_float(expect(Tok::Number, "vector component").text));
      }
    }
    symbol("]");
    if (paren) symbol(")");
    return t;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

std::string format_literal(const ScalarValue& v) {
  if (const auto* d = std::get_if<double>(&v)) return format_double(*d);
  std::string out = "'";
  for (char c : std::get<std::string>(v)) {
    if (c == '\'') out.push_back('\'');
    out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

std::string_view op_symbol(CompareOp op) {
  switch (op) {
    case CompareOp::Eq: return "=";
    case CompareOp::Lt: return "<";
    case CompareOp::Le: return "<=";
    case CompareOp::Gt: return ">";
    case CompareOp::Ge: return ">=";
    case CompareOp::Between: return "BETWEEN";
  }
  return "?";
}

}  // namespace

Statement parse_statement(std::string_view text) { return Parser(text).statement(); }

std::string format_statement(const Statement& st) {
  std::ostringstream out;
  for (const auto& [name, value] : st.settings) out << "SET " << name << " = " << value << ";\n";
  out << "SELECT id FROM " << st.table;
  for (std::size_t i = 0; i < st.predicates.size(); ++i) {
    const auto& p = st.predicates[i];
    out << (i == 0 ? " WHERE " : " AND ") << p.column << ' ' << op_symbol(p.op) << ' ' << format_literal(p.operand);
    if (p.op == CompareOp::Between) out << " AND " << format_literal(p.upper);
  }
  out << " ORDER BY ";
  for (std::size_t i = 0; i < st.order.size(); ++i) {
    const auto& t = st.order[i];
    if (i) out << " + ";
    if (t.weight) out << format_double(*t.weight) << " * ";
    out << '(' << t.column << " <-> [";
    for (std::size_t j = 0; j < t.vector.size(); ++j) out << (j ? ", " : "") << format_float(t.vector[j]);
    out << "])";
  }
  out << " LIMIT " << st.limit;
  if (st.target_recall) out << " WITH RECALL " << format_double(*st.target_recall);
  out << ';';
  return out.str();
}

HybridQuery to_query(const Statement& st, const TableSchema& schema) {
  HybridQuery q;
  const std::size_t n = schema.vector_columns.size();
  q.predicates = st.predicates;
  q.k = st.limit;
  if (st.target_recall) q.target_recall = *st.target_recall;
  q.weights.assign(n, 0.0);
  q.query_vectors.resize(n);
  std::vector<bool> seen(n, false);
  for (const auto& t : st.order) {
    const auto col = schema.find_vector_column(t.column);
    if (!col) fail(ErrorCode::UnknownColumn, t.column);
    if (seen[*col]) fail(ErrorCode::InvalidQuery, "vector column " + t.column + " appears twice in ORDER BY");
    seen[*col] = true;
    q.weights[*col] = t.weight.value_or(1.0);
    q.query_vectors[*col] = t.vector;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) q.query_vectors[i].assign(schema.vector_columns[i].dimension, 0.0f);
  }
  q.validate(schema);
  return q;
}

Statement from_query(const HybridQuery& query, const TableSchema& schema, std::string table) {
  query.validate(schema);
  Statement st;
  st.table = std::move(table);
  st.predicates = query.predicates;
  for (std::size_t i = 0; i < schema.vector_columns.size(); ++i) {
    st.order.push_back({schema.vector_columns[i].name, query.weights[i], query.query_vectors[i]});
  }
  st.limit = query.k;
  st.target_recall = query.target_recall;
  return st;
}

HybridQuery parse_query(std::string_view text, const TableSchema& schema) {
  return to_query(parse_statement(text), schema);
}

std::string format_query(const HybridQuery& query, const TableSchema& schema, std::string table) {
  return format_statement(from_query(query, schema, std::move(table)));
}

}  // namespace hyq
