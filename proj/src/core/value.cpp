#include "soacomp/value.hpp"

#include <array>
#include <stdexcept>

namespace soacomp {

namespace {

constexpr std::array<std::pair<ParamType, std::string_view>, 5> kTypeNames{{
    {ParamType::Text, "text"},
    {ParamType::Integer, "integer"},
    {ParamType::Real, "real"},
    {ParamType::Flag, "flag"},
    {ParamType::Date, "date"},
}};

bool is_alpha(char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

}  // namespace

std::string_view to_string(ParamType t) {
  for (const auto& [type, name] : kTypeNames) {
    if (type == t) return name;
  }
  return "?";
}

std::optional<ParamType> parse_param_type(std::string_view token) {
  for (const auto& [type, name] : kTypeNames) {
    if (name == token) return type;
  }
  return std::nullopt;
}

bool is_identifier(std::string_view s) {
  if (s.empty() || !is_alpha(s.front())) return false;
  for (char c : s.substr(1)) {
    if (!is_alpha(c) && !is_digit(c) && c != '_') return false;
  }
  return true;
}

double Value::numeric() const {
  switch (type_) {
    case ParamType::Integer:
    case ParamType::Date:
      return static_cast<double>(as_integer());
    case ParamType::Real:
      return as_real();
    default:
      throw std::logic_error("value is not numeric");
  }
}

Json Value::to_json() const {
  Json j;
  j["type"] = std::string(to_string(type_));
  std::visit([&](const auto& v) { j["value"] = v; }, data_);
  return j;
}

Value Value::from_json(const Json& j) {
  if (!j.is_object() || !j.contains("type") || !j.contains("value") || !j["type"].is_string()) {
    throw std::invalid_argument("typed value must be {\"type\":..., \"value\":...}");
  }
  auto type = parse_param_type(j["type"].get<std::string>());
  if (!type) throw std::invalid_argument("unknown type tag '" + j["type"].get<std::string>() + "'");
  const Json& v = j["value"];
  switch (*type) {
    case ParamType::Text:
      if (!v.is_string()) break;
      return Value::text(v.get<std::string>());
    case ParamType::Integer:
      if (!v.is_number_integer()) break;
      return Value::integer(v.get<std::int64_t>());
    case ParamType::Date:
      if (!v.is_number_integer()) break;
      return Value::date(v.get<std::int64_t>());
    case ParamType::Real:
      if (!v.is_number()) break;
      return Value::real(v.get<double>());
    case ParamType::Flag:
      if (!v.is_boolean()) break;
      return Value::flag(v.get<bool>());
  }
  throw std::invalid_argument("value does not match declared type '" +
                              std::string(to_string(*type)) + "'");
}

Json to_json(const ValueMap& m) {
  Json j = Json::object();
  for (const auto& [name, value] : m) j[name] = value.to_json();
  return j;
}

ValueMap value_map_from_json(const Json& j) {
  if (!j.is_object()) throw std::invalid_argument("argument map must be an object");
  ValueMap out;
  for (const auto& [name, value] : j.items()) out.emplace(name, Value::from_json(value));
  return out;
}

}  // namespace soacomp
