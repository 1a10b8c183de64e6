#pragma once

// Strict reader for the small XML subset descriptors use: elements,
// attributes, comments and an optional leading declaration. Character data
// other than whitespace is rejected.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace soacomp::xml {

struct Element {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attributes;  // document order
  std::vector<Element> children;
  std::size_t line = 0;

  const std::string* attribute(std::string_view key) const;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Parses a complete document and returns its root element.
Element parse(std::string_view text);

/// Escapes `&<>"'` for use inside a double-quoted attribute.
std::string escape_attribute(std::string_view raw);

}  // namespace soacomp::xml
