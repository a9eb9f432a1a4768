#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace flowforge::yaml {

// Parsed node of the supported YAML subset: block maps and lists, flow
// lists/maps on a single line, plain or quoted scalars, and # comments.
// Anchors, aliases, multi-line scalars and multiple documents are not
// supported.
class Node {
 public:
  enum class Type { Null, Scalar, Map, List };

  Node() = default;
  static Node scalar(std::string text, bool quoted = false, int line = 0);
  static Node map(int line = 0);
  static Node list(int line = 0);

  Type type() const { return type_; }
  bool is_null() const { return type_ == Type::Null; }
  bool is_scalar() const { return type_ == Type::Scalar; }
  bool is_map() const { return type_ == Type::Map; }
  bool is_list() const { return type_ == Type::List; }
  int line() const { return line_; }

  const std::string& text() const { return text_; }
  bool quoted() const { return quoted_; }

  const std::vector<std::pair<std::string, Node>>& entries() const { return entries_; }
  const std::vector<Node>& items() const { return items_; }
  const Node* find(std::string_view key) const;

  // Builders used by the parser and the emitter.
  Node& set(std::string key, Node value);
  Node& push(Node value);

  friend bool operator==(const Node&, const Node&);

 private:
  Type type_ = Type::Null;
  int line_ = 0;
  std::string text_;
  bool quoted_ = false;
  std::vector<std::pair<std::string, Node>> entries_;
  std::vector<Node> items_;
};

// Throws YamlSyntaxError carrying the 1-based line number.
Node parse(std::string_view text);

std::string emit(const Node& node);

// Formats a double so that parsing it back yields the identical value.
std::string format_double(double v);

}  // namespace flowforge::yaml
