#pragma once

// Service descriptors and the WSDL-subset document every node publishes.
//
// Canonical document shape:
//
//   <definitions name="S">
//     <message name="OpRequest"> <part name="p" type="text"/>* </message>
//     <message name="OpResponse"> <part name="r" type="real"/>+ </message>
//     <portType name="SPort">
//       <operation name="Op">
//         <input message="OpRequest"/>
//         <output message="OpResponse"/>
//       </operation>*
//     </portType>
//     <service name="S">
//       <port name="SPort"><address location="node://id"/></port>
//     </service>
//   </definitions>
//
// Messages are emitted sorted by name, operations in declaration order, two
// space indentation, LF line endings. Elements without children are written
// self-closing.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "soacomp/value.hpp"

namespace soacomp {

struct ParamSpec {
  std::string name;
  ParamType type = ParamType::Text;

  friend bool operator==(const ParamSpec&, const ParamSpec&) = default;
};

struct OperationSignature {
  std::string name;
  std::vector<ParamSpec> inputs;
  std::vector<ParamSpec> outputs;

  friend bool operator==(const OperationSignature&, const OperationSignature&) = default;
};

struct ServiceDescriptor {
  std::string service_name;
  std::string endpoint;  // node://<id>
  std::vector<OperationSignature> operations;

  const OperationSignature* find(std::string_view op) const;

  friend bool operator==(const ServiceDescriptor&, const ServiceDescriptor&) = default;
};

/// `[a-z][a-z0-9]*`
bool is_node_id(std::string_view s);
std::string endpoint_for(std::string_view node_id);
/// The id part of a well-formed `node://<id>` endpoint.
std::optional<std::string> endpoint_node_id(std::string_view endpoint);

enum class ViolationCode { DupOp, EmptyOutput, BadEndpoint, DupParam, BadIdentifier };

std::string_view to_string(ViolationCode c);

struct Violation {
  ViolationCode code;
  std::string where;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Every invariant violation in `d`, in a stable order. Empty means valid.
std::vector<Violation> validate_descriptor(const ServiceDescriptor& d);

class DescriptorError : public std::runtime_error {
 public:
  DescriptorError(const std::string& what, std::size_t line, std::string element)
      : std::runtime_error(what), line_(line), element_(std::move(element)) {}

  std::size_t line() const { return line_; }
  const std::string& element() const { return element_; }

 private:
  std::size_t line_;
  std::string element_;
};

/// Malformed markup.
class SyntaxError : public DescriptorError {
  using DescriptorError::DescriptorError;
};

/// Well-formed markup that does not describe a valid descriptor.
class SchemaError : public DescriptorError {
  using DescriptorError::DescriptorError;
};

class InvariantError : public std::runtime_error {
 public:
  explicit InvariantError(std::vector<Violation> violations);
  const std::vector<Violation>& violations() const { return violations_; }

 private:
  std::vector<Violation> violations_;
};

/// Throws SyntaxError or SchemaError; never anything else for bad input.
ServiceDescriptor parse_descriptor(std::string_view text);

/// Throws InvariantError when `d` is not valid.
std::string serialize_descriptor(const ServiceDescriptor& d);

}  // namespace soacomp
