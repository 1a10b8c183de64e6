#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <json.hpp>

namespace soacomp {

using Json = nlohmann::ordered_json;

/// Scalar parameter types a descriptor may advertise. The set is closed.
enum class ParamType { Text, Integer, Real, Flag, Date };

std::string_view to_string(ParamType t);
std::optional<ParamType> parse_param_type(std::string_view token);

/// `[A-Za-z][A-Za-z0-9_]*`
bool is_identifier(std::string_view s);

/// A typed scalar carried in invoke envelopes. Dates are day numbers.
class Value {
 public:
  using Storage = std::variant<std::string, std::int64_t, double, bool>;

  Value() : type_(ParamType::Flag), data_(false) {}

  static Value text(std::string s) { return Value(ParamType::Text, std::move(s)); }
  static Value integer(std::int64_t v) { return Value(ParamType::Integer, v); }
  static Value real(double v) { return Value(ParamType::Real, v); }
  static Value flag(bool v) { return Value(ParamType::Flag, v); }
  static Value date(std::int64_t day) { return Value(ParamType::Date, day); }

  ParamType type() const { return type_; }

  const std::string& as_text() const { return std::get<std::string>(data_); }
  std::int64_t as_integer() const { return std::get<std::int64_t>(data_); }
  double as_real() const { return std::get<double>(data_); }
  bool as_flag() const { return std::get<bool>(data_); }

  bool is_numeric() const {
    return type_ == ParamType::Integer || type_ == ParamType::Real || type_ == ParamType::Date;
  }
  /// Integer, date and real values widened to double.
  double numeric() const;

  Json to_json() const;
  /// Expects `{"type": TAG, "value": V}`; throws std::invalid_argument.
  static Value from_json(const Json& j);

  friend bool operator==(const Value&, const Value&) = default;

 private:
  Value(ParamType t, Storage s) : type_(t), data_(std::move(s)) {}

  ParamType type_;
  Storage data_;
};

/// Named values: invoke arguments and results.
using ValueMap = std::map<std::string, Value>;

Json to_json(const ValueMap& m);
ValueMap value_map_from_json(const Json& j);

}  // namespace soacomp
