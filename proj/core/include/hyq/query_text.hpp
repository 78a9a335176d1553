#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hyq/store.hpp"

namespace hyq {

// One `w * (column <-> [..])` term of an ORDER BY clause.
struct OrderTerm {
  std::string column;
  std::optional<double> weight;  // absent when written without a factor
  std::vector<float> vector;

  bool operator==(const OrderTerm&) const = default;
};

// The SQL-like text form:
//   [SET name = value;]...
//   SELECT id FROM t [WHERE p AND ...] ORDER BY w1 * (c1 <-> [..]) + ... LIMIT k
//   [WITH RECALL r];
struct Statement {
  std::vector<std::pair<std::string, std::string>> settings;
  std::string table;
  std::vector<Predicate> predicates;
  std::vector<OrderTerm> order;
  std::size_t limit = 0;
  std::optional<double> target_recall;

  bool operator==(const Statement&) const = default;
};

Statement parse_statement(std::string_view text);  // throws ParseError
// Shortest round-trip number formatting, so parse(format(s)) == s.
std::string format_statement(const Statement& statement);

// Vector columns absent from ORDER BY get weight 0 and a zero vector.
HybridQuery to_query(const Statement& statement, const TableSchema& schema);
Statement from_query(const HybridQuery& query, const TableSchema& schema, std::string table);

HybridQuery parse_query(std::string_view text, const TableSchema& schema);
std::string format_query(const HybridQuery& query, const TableSchema& schema, std::string table = "items");

}  // namespace hyq
