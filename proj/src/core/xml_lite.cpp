#include "xml_lite.hpp"

#include <cstdint>

namespace soacomp::xml {

const std::string* Element::attribute(std::string_view key) const {
  for (const auto& [k, v] : attributes) {
    if (k == key) return &v;
  }
  return nullptr;
}

namespace {

constexpr int kMaxDepth = 64;

bool is_name_start(char c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_' || c == ':';
}
bool is_name_char(char c) {
  return is_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == '.';
}
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view text) : text_(text) {}

  Element document() {
    if (starts_with("<?xml")) skip_declaration();
    skip_misc();
    if (at_end()) fail("document has no root element");
    if (peek() != '<') fail("character data outside root element");
    Element root = element(0);
    skip_misc();
    if (!at_end()) fail("content after root element");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_, msg); }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  bool starts_with(std::string_view s) const { return text_.substr(pos_).starts_with(s); }

  void advance(std::size_t n = 1) {
    for (std::size_t i = 0; i < n && pos_ < text_.size(); ++i) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }

  void expect(char c) {
    if (at_end() || peek() != c) {
      fail(std::string("expected '") + c + "'");
    }
    advance();
  }

  void skip_space() {
    while (!at_end() && is_space(peek())) advance();
  }

  void skip_declaration() {
    auto end = text_.find("?>", pos_);
    if (end == std::string_view::npos) fail("unterminated XML declaration");
    advance(end + 2 - pos_);
  }

  void skip_comment() {
    advance(4);  // "<!--"
    auto end = text_.find("-->", pos_);
    if (end == std::string_view::npos) fail("unterminated comment");
    advance(end + 3 - pos_);
  }

  // Whitespace and comments between markup.
  void skip_misc() {
    for (;;) {
      skip_space();
      if (starts_with("<!--")) {
        skip_comment();
      } else {
        return;
      }
    }
  }

  std::string name() {
    if (at_end() || !is_name_start(peek())) fail("expected a name");
    std::size_t start = pos_;
    while (!at_end() && is_name_char(peek())) advance();
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string attribute_value() {
    if (at_end() || (peek() != '"' && peek() != '\'')) fail("expected quoted attribute value");
    char quote = peek();
    advance();
    std::string out;
    for (;;) {
      if (at_end()) fail("unterminated attribute value");
      char c = peek();
      if (c == quote) break;
      if (c == '<') fail("'<' not allowed in attribute value");
      if (c == '&') {
        out += entity();
        continue;
      }
      out += c;
      advance();
    }
    advance();
    return out;
  }

  std::string entity() {
    auto end = text_.find(';', pos_);
    if (end == std::string_view::npos || end - pos_ > 12) fail("malformed entity reference");
    std::string_view ref = text_.substr(pos_ + 1, end - pos_ - 1);
    std::string out;
    if (ref == "amp") out = "&";
    else if (ref == "lt") out = "<";
    else if (ref == "gt") out = ">";
    else if (ref == "quot") out = "\"";
    else if (ref == "apos") out = "'";
    else if (ref.size() > 1 && ref[0] == '#') {
      std::uint32_t cp = 0;
      bool hex = ref[1] == 'x';
      std::string_view digits = ref.substr(hex ? 2 : 1);
      if (digits.empty()) fail("malformed character reference");
      for (char d : digits) {
        int v;
        if (d >= '0' && d <= '9') v = d - '0';
        else if (hex && d >= 'a' && d <= 'f') v = d - 'a' + 10;
        else if (hex && d >= 'A' && d <= 'F') v = d - 'A' + 10;
        else fail("malformed character reference");
        cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(v);
        if (cp > 0x10FFFF) fail("character reference out of range");
      }
      if (cp == 0) fail("character reference out of range");
      append_utf8(out, cp);
    } else {
      fail("unknown entity '&" + std::string(ref) + ";'");
    }
    advance(end + 1 - pos_);
    return out;
  }

  Element element(int depth) {
    if (depth >= kMaxDepth) fail("elements nested too deeply");
    Element el;
    el.line = line_;
    expect('<');
    el.name = name();
    for (;;) {
      bool had_space = !at_end() && is_space(peek());
      skip_space();
      if (at_end()) fail("unterminated start tag <" + el.name + ">");
      if (peek() == '/') {
        advance();
        expect('>');
        return el;
      }
      if (peek() == '>') {
        advance();
        break;
      }
      if (!had_space) fail("expected whitespace before attribute");
      std::string key = name();
      skip_space();
      expect('=');
      skip_space();
      std::string value = attribute_value();
      if (el.attribute(key)) fail("duplicate attribute '" + key + "' on <" + el.name + ">");
      el.attributes.emplace_back(std::move(key), std::move(value));
    }
    for (;;) {
      skip_misc();
      if (at_end()) fail("unterminated element <" + el.name + ">");
      if (peek() != '<') fail("character data not allowed inside <" + el.name + ">");
      if (starts_with("</")) {
        advance(2);
        std::string closing = name();
        if (closing != el.name) {
          fail("mismatched end tag </" + closing + "> for <" + el.name + ">");
        }
        skip_space();
        expect('>');
        return el;
      }
      if (starts_with("<!") || starts_with("<?")) fail("unsupported markup inside <" + el.name + ">");
      el.children.push_back(element(depth + 1));
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

}  // namespace

Element parse(std::string_view text) { return Reader(text).document(); }

std::string escape_attribute(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace soacomp::xml
