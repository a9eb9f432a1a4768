#include "flowforge/yaml.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <string>

#include "flowforge/errors.hpp"

namespace flowforge::yaml {

Node Node::scalar(std::string text, bool quoted, int line) {
  Node n;
  n.type_ = Type::Scalar;
  n.text_ = std::move(text);
  n.quoted_ = quoted;
  n.line_ = line;
  return n;
}

Node Node::map(int line) {
  Node n;
  n.type_ = Type::Map;
  n.line_ = line;
  return n;
}

Node Node::list(int line) {
  Node n;
  n.type_ = Type::List;
  n.line_ = line;
  return n;
}

const Node* Node::find(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return &v;
  }
  return nullptr;
}

Node& Node::set(std::string key, Node value) {
  entries_.emplace_back(std::move(key), std::move(value));
  return entries_.back().second;
}

Node& Node::push(Node value) {
  items_.push_back(std::move(value));
  return items_.back();
}

// Structural equality; line numbers and quoting style are ignored.
bool operator==(const Node& a, const Node& b) {
  return a.type_ == b.type_ && a.text_ == b.text_ && a.entries_ == b.entries_ &&
         a.items_ == b.items_;
}

// ---------------------------------------------------------------------------

namespace {

int line_of(const YAML::Mark& mark) { return mark.is_null() ? 0 : mark.line + 1; }

Node convert(const YAML::Node& y) {
  const int line = line_of(y.Mark());
  switch (y.Type()) {
    case YAML::NodeType::Undefined:
    case YAML::NodeType::Null:
      return Node();
    case YAML::NodeType::Scalar:
      // Non-plain scalars ("...", '...') carry the "!" tag.
      return Node::scalar(y.Scalar(), y.Tag() == "!", line);
    case YAML::NodeType::Sequence: {
      Node n = Node::list(line);
      for (const auto& item : y) n.push(convert(item));
      return n;
    }
    case YAML::NodeType::Map: {
      Node n = Node::map(line);
      for (const auto& kv : y) {
        const int key_line = line_of(kv.first.Mark());
        if (!kv.first.IsScalar()) throw YamlSyntaxError(key_line, "map keys must be scalars");
        const std::string key = kv.first.Scalar();
        if (n.find(key)) throw YamlSyntaxError(key_line, "duplicate key '" + key + "'");
        n.set(key, convert(kv.second));
      }
      return n;
    }
  }
  return Node();
}

// Lists without maps inside read best on one line.
bool is_flow_friendly(const Node& n) {
  if (n.is_map()) return false;
  for (const auto& item : n.items()) {
    if (!is_flow_friendly(item)) return false;
  }
  return true;
}

void emit_node(YAML::Emitter& out, const Node& n) {
  switch (n.type()) {
    case Node::Type::Null:
      out << YAML::Null;
      return;
    case Node::Type::Scalar:
      if (n.quoted()) out << YAML::DoubleQuoted;
      out << n.text();
      return;
    case Node::Type::List:
      if (n.items().empty() || is_flow_friendly(n)) out << YAML::Flow;
      out << YAML::BeginSeq;
      for (const auto& item : n.items()) emit_node(out, item);
      out << YAML::EndSeq;
      return;
    case Node::Type::Map:
      if (n.entries().empty()) out << YAML::Flow;
      out << YAML::BeginMap;
      for (const auto& [k, v] : n.entries()) {
        out << YAML::Key << k << YAML::Value;
        emit_node(out, v);
      }
      out << YAML::EndMap;
      return;
  }
}

}  // namespace

Node parse(std::string_view text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(text));
  } catch (const YAML::ParserException& e) {
    throw YamlSyntaxError(line_of(e.mark), e.msg);
  }
  // An empty document is an empty map, so an empty config means "all defaults".
  if (root.IsNull()) return Node::map(1);
  return convert(root);
}

std::string emit(const Node& node) {
  YAML::Emitter out;
  out.SetIndent(2);
  out.SetDoublePrecision(17);
  emit_node(out, node);
  return std::string(out.c_str()) + "\n";
}

std::string format_double(double v) {
  if (std::isnan(v)) return ".nan";
  if (std::isinf(v)) return v > 0 ? ".inf" : "-.inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, end);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

}  // namespace flowforge::yaml
