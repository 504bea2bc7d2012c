#include "toml_lite.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace drivesafe::toml_lite {

namespace {

struct Cursor {
  const std::string& text;
  std::size_t pos = 0;
  int line = 1;
  const std::string& origin;

  [[noreturn]] void fail(const std::string& what) const {
    throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + what);
  }
  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  char take() {
    const char c = text[pos++];
    if (c == '\n') ++line;
    return c;
  }
  void skip_inline_ws() {
    while (!done() && (peek() == ' ' || peek() == '\t')) ++pos;
  }
  void skip_ws_and_comments() {
    while (!done()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        take();
      } else if (c == '#') {
        while (!done() && peek() != '\n') ++pos;
      } else {
        break;
      }
    }
  }
};

std::string parse_basic_string(Cursor& c) {
  if (c.take() != '"') c.fail("expected '\"'");
  std::string out;
  while (true) {
    if (c.done()) c.fail("unterminated string");
    const char ch = c.take();
    if (ch == '"') break;
    if (ch == '\\') {
      if (c.done()) c.fail("dangling escape");
      const char esc = c.take();
      switch (esc) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default: c.fail(std::string("unsupported escape \\") + esc);
      }
    } else {
      out.push_back(ch);
    }
  }
  return out;
}

Value parse_value(Cursor& c);

Value parse_array(Cursor& c) {
  if (c.take() != '[') c.fail("expected '['");
  Value out;
  out.kind = Value::Kind::Array;
  c.skip_ws_and_comments();
  if (!c.done() && c.peek() == ']') {
    c.take();
    return out;
  }
  while (true) {
    c.skip_ws_and_comments();
    out.array.push_back(parse_value(c));
    c.skip_ws_and_comments();
    if (c.done()) c.fail("unterminated array");
    const char ch = c.take();
    if (ch == ']') break;
    if (ch != ',') c.fail("expected ',' or ']' in array");
    c.skip_ws_and_comments();
    if (!c.done() && c.peek() == ']') {  // trailing comma
      c.take();
      break;
    }
  }
  return out;
}

Value parse_value(Cursor& c) {
  if (c.done()) c.fail("expected a value");
  const char ch = c.peek();
  Value v;
  if (ch == '"') {
    v.kind = Value::Kind::String;
    v.str = parse_basic_string(c);
    return v;
  }
  if (ch == '[') return parse_array(c);
  std::string token;
  while (!c.done()) {
    const char t = c.peek();
    if (t == '\n' || t == '#' || t == ',' || t == ']' || t == ' ' || t == '\t' || t == '\r') break;
    token.push_back(c.take());
  }
  if (token == "true" || token == "false") {
    v.kind = Value::Kind::Boolean;
    v.boolean = token == "true";
    return v;
  }
  try {
    std::size_t used = 0;
    v.number = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    v.kind = Value::Kind::Number;
    return v;
  } catch (const std::exception&) {
    c.fail("cannot parse value '" + token + "'");
  }
}

}  // namespace

Table parse_string(const std::string& text, const std::string& origin) {
  Cursor c{text, 0, 1, origin};
  Table table;
  std::string section;

  while (true) {
    c.skip_ws_and_comments();
    if (c.done()) break;

    if (c.peek() == '[') {
      c.take();
      std::string name;
      while (!c.done() && c.peek() != ']' && c.peek() != '\n') name.push_back(c.take());
      if (c.done() || c.peek() != ']') c.fail("unterminated section header");
      c.take();
      section = name;
      continue;
    }

    std::string key;
    while (!c.done()) {
      const char ch = c.peek();
      if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.') {
        key.push_back(c.take());
      } else {
        break;
      }
    }
    if (key.empty()) c.fail("expected a key");
    c.skip_inline_ws();
    if (c.done() || c.take() != '=') c.fail("expected '=' after key '" + key + "'");
    c.skip_inline_ws();
    const std::string full_key = section.empty() ? key : section + "." + key;
    if (table.count(full_key)) c.fail("duplicate key '" + full_key + "'");
    table[full_key] = parse_value(c);
  }
  return table;
}

Table parse_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path.string());
}

}  // namespace drivesafe::toml_lite
