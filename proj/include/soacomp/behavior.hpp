#pragma once

// Builtin operation behaviors. A behavior is selected by key and configured
// with static data; nothing is loaded as code at runtime.
//
//   catalog  lookup table keyed by the operation's single text input.
//            Rows come from a fixture file (`name|delivery_days|price|in_stock`)
//            or inline. Outputs bind to columns, default
//            value<-in_stock (flag), date<-delivery_days (integer),
//            price<-price (real).
//   affine   one rule per output: integer/date `from*scale+offset`,
//            real `from*scale+offset`, flag copies a flag (negated when
//            scale < 0) or tests `from > offset`, text prefixes `from`.
//            A rule without `from` yields its constant.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "soacomp/descriptor.hpp"
#include "soacomp/value.hpp"

namespace soacomp {

class BehaviorError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Behavior {
 public:
  virtual ~Behavior() = default;

  virtual std::string_view key() const = 0;
  virtual const std::vector<ParamSpec>& declared_outputs() const = 0;
  /// Reason `sig` cannot be served by this behavior, if any.
  virtual std::optional<std::string> incompatibility(const OperationSignature& sig) const = 0;
  /// `args` already type-checked against `sig.inputs`.
  virtual ValueMap execute(const OperationSignature& sig, const ValueMap& args) const = 0;
  virtual Json to_json() const = 0;
};

using BehaviorPtr = std::shared_ptr<const Behavior>;

struct CatalogRow {
  std::string name;
  std::int64_t delivery_days = 0;
  double price = 0.0;
  bool in_stock = false;

  friend bool operator==(const CatalogRow&, const CatalogRow&) = default;
};

/// Reads `name|delivery_days|price|in_stock` rows. Blank lines and lines
/// starting with '#' are skipped. Throws BehaviorError with the line number.
std::vector<CatalogRow> parse_catalog(std::string_view text);
std::vector<CatalogRow> load_catalog(const std::filesystem::path& path);

enum class CatalogColumn { InStock, DeliveryDays, Price };

struct CatalogBinding {
  std::string output;
  CatalogColumn column;
};

BehaviorPtr make_catalog_behavior(std::vector<CatalogRow> rows, std::vector<CatalogBinding> bindings = {});

struct AffineRule {
  std::string output;
  ParamType type = ParamType::Real;
  std::optional<std::string> from;
  double scale = 1.0;
  double offset = 0.0;
  std::string prefix;  // text outputs
};

BehaviorPtr make_affine_behavior(std::vector<AffineRule> rules);

/// Builds a behavior from its JSON spec (`{"key": ..., ...}`); relative
/// fixture paths resolve against `base_dir`. Throws BehaviorError.
BehaviorPtr make_behavior(const Json& spec, const std::filesystem::path& base_dir = {});

}  // namespace soacomp
