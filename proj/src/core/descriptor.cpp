#include "soacomp/descriptor.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "xml_lite.hpp"

namespace soacomp {

const OperationSignature* ServiceDescriptor::find(std::string_view op) const {
  for (const auto& o : operations) {
    if (o.name == op) return &o;
  }
  return nullptr;
}

bool is_node_id(std::string_view s) {
  if (s.empty() || s.front() < 'a' || s.front() > 'z') return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
  });
}

std::string endpoint_for(std::string_view node_id) {
  return "node://" + std::string(node_id);
}

std::optional<std::string> endpoint_node_id(std::string_view endpoint) {
  constexpr std::string_view kScheme = "node://";
  if (!endpoint.starts_with(kScheme)) return std::nullopt;
  std::string_view id = endpoint.substr(kScheme.size());
  if (!is_node_id(id)) return std::nullopt;
  return std::string(id);
}

std::string_view to_string(ViolationCode c) {
  switch (c) {
    case ViolationCode::DupOp: return "DUP_OP";
    case ViolationCode::EmptyOutput: return "EMPTY_OUTPUT";
    case ViolationCode::BadEndpoint: return "BAD_ENDPOINT";
    case ViolationCode::DupParam: return "DUP_PARAM";
    case ViolationCode::BadIdentifier: return "BAD_IDENT";
  }
  return "?";
}

namespace {

void check_params(const std::vector<ParamSpec>& params, const std::string& where,
                  std::vector<Violation>& out) {
  std::set<std::string_view> seen;
  for (const auto& p : params) {
    if (!is_identifier(p.name)) out.push_back({ViolationCode::BadIdentifier, where + "." + p.name});
    if (!seen.insert(p.name).second) out.push_back({ViolationCode::DupParam, where + "." + p.name});
  }
}

std::string summarize(const std::vector<Violation>& vs) {
  std::string msg = "descriptor violates invariants:";
  for (const auto& v : vs) {
    msg += ' ';
    msg += to_string(v.code);
    msg += '(' + v.where + ')';
  }
  return msg;
}

}  // namespace

std::vector<Violation> validate_descriptor(const ServiceDescriptor& d) {
  std::vector<Violation> out;
  if (!is_identifier(d.service_name)) {
    out.push_back({ViolationCode::BadIdentifier, "service '" + d.service_name + "'"});
  }
  if (!endpoint_node_id(d.endpoint)) {
    out.push_back({ViolationCode::BadEndpoint, "endpoint '" + d.endpoint + "'"});
  }
  std::set<std::string_view> ops;
  for (const auto& op : d.operations) {
    if (!is_identifier(op.name)) {
      out.push_back({ViolationCode::BadIdentifier, "operation '" + op.name + "'"});
    }
    if (!ops.insert(op.name).second) {
      out.push_back({ViolationCode::DupOp, "operation '" + op.name + "'"});
    }
    check_params(op.inputs, op.name + ".input", out);
    check_params(op.outputs, op.name + ".output", out);
    if (op.outputs.empty()) {
      out.push_back({ViolationCode::EmptyOutput, "operation '" + op.name + "'"});
    }
  }
  return out;
}

InvariantError::InvariantError(std::vector<Violation> violations)
    : std::runtime_error(summarize(violations)), violations_(std::move(violations)) {}

// ---------------------------------------------------------------------------
// Parsing

namespace {

std::string tag_of(const xml::Element& el) {
  std::string s = "<" + el.name;
  if (const auto* n = el.attribute("name")) s += " name=\"" + *n + "\"";
  return s + ">";
}

class SchemaReader {
 public:
  ServiceDescriptor read(const xml::Element& root) {
    if (root.name != "definitions") fail(root, "root element must be <definitions>");
    ServiceDescriptor d;
    d.service_name = identifier_attr(root, "name");
    only_attributes(root, {"name"});

    const xml::Element* port_type = nullptr;
    const xml::Element* service = nullptr;
    for (const auto& child : root.children) {
      if (child.name == "message") {
        read_message(child);
      } else if (child.name == "portType") {
        if (port_type) fail(child, "duplicate <portType>");
        port_type = &child;
      } else if (child.name == "service") {
        if (service) fail(child, "duplicate <service>");
        service = &child;
      } else {
        fail(child, "unexpected element <" + child.name + "> in <definitions>");
      }
    }
    if (!port_type) fail(root, "missing <portType>");
    if (!service) fail(root, "missing <service>");

    const std::string port_name = d.service_name + "Port";
    only_attributes(*port_type, {"name"});
    if (required_attr(*port_type, "name") != port_name) {
      fail(*port_type, "portType must be named '" + port_name + "'");
    }
    std::set<std::string> op_names;
    for (const auto& op_el : port_type->children) {
      if (op_el.name != "operation") {
        fail(op_el, "unexpected element <" + op_el.name + "> in <portType>");
      }
      OperationSignature op = read_operation(op_el);
      if (!op_names.insert(op.name).second) fail(op_el, "duplicate operation '" + op.name + "'");
      d.operations.push_back(std::move(op));
    }
    for (const auto& [name, msg] : messages_) {
      if (!referenced_.contains(name)) {
        fail(*msg.element, "message '" + name + "' is not referenced by any operation");
      }
    }

    d.endpoint = read_service(*service, d.service_name, port_name);

    auto violations = validate_descriptor(d);
    if (!violations.empty()) {
      throw SchemaError(InvariantError(violations).what(), root.line, tag_of(root));
    }
    return d;
  }

 private:
  struct Message {
    const xml::Element* element;
    std::vector<ParamSpec> parts;
  };

  [[noreturn]] static void fail(const xml::Element& el, const std::string& msg) {
    throw SchemaError("line " + std::to_string(el.line) + ": " + tag_of(el) + ": " + msg, el.line,
                      tag_of(el));
  }

  static void only_attributes(const xml::Element& el, std::initializer_list<std::string_view> allowed) {
    for (const auto& [key, value] : el.attributes) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        fail(el, "unexpected attribute '" + key + "'");
      }
    }
  }

  static const std::string& required_attr(const xml::Element& el, std::string_view key) {
    const std::string* v = el.attribute(key);
    if (!v) fail(el, "missing attribute '" + std::string(key) + "'");
    return *v;
  }

  static std::string identifier_attr(const xml::Element& el, std::string_view key) {
    const std::string& v = required_attr(el, key);
    if (!is_identifier(v)) fail(el, "'" + v + "' is not a valid identifier");
    return v;
  }

  static void no_children(const xml::Element& el) {
    if (!el.children.empty()) fail(el, "<" + el.name + "> must be empty");
  }

  void read_message(const xml::Element& el) {
    only_attributes(el, {"name"});
    std::string name = identifier_attr(el, "name");
    if (messages_.contains(name)) fail(el, "duplicate message '" + name + "'");
    Message msg{&el, {}};
    std::set<std::string> part_names;
    for (const auto& part : el.children) {
      if (part.name != "part") fail(part, "unexpected element <" + part.name + "> in <message>");
      only_attributes(part, {"name", "type"});
      no_children(part);
      std::string pname = identifier_attr(part, "name");
      const std::string& tname = required_attr(part, "type");
      auto type = parse_param_type(tname);
      if (!type) fail(part, "unknown type '" + tname + "'");
      if (!part_names.insert(pname).second) fail(part, "duplicate part '" + pname + "'");
      msg.parts.push_back({std::move(pname), *type});
    }
    messages_.emplace(std::move(name), std::move(msg));
  }

  const Message& resolve(const xml::Element& ref, const std::string& expected) {
    only_attributes(ref, {"message"});
    no_children(ref);
    const std::string& name = required_attr(ref, "message");
    auto it = messages_.find(name);
    if (it == messages_.end()) fail(ref, "reference to undefined message '" + name + "'");
    if (name != expected) fail(ref, "message must be named '" + expected + "', got '" + name + "'");
    if (!referenced_.insert(name).second) fail(ref, "message '" + name + "' referenced twice");
    return it->second;
  }

  OperationSignature read_operation(const xml::Element& el) {
    only_attributes(el, {"name"});
    OperationSignature op;
    op.name = identifier_attr(el, "name");
    const xml::Element* input = nullptr;
    const xml::Element* output = nullptr;
    for (const auto& child : el.children) {
      if (child.name == "input") {
        if (input) fail(child, "duplicate <input>");
        input = &child;
      } else if (child.name == "output") {
        if (output) fail(child, "duplicate <output>");
        output = &child;
      } else {
        fail(child, "unexpected element <" + child.name + "> in <operation>");
      }
    }
    if (!input) fail(el, "operation '" + op.name + "' has no <input>");
    if (!output) fail(el, "operation '" + op.name + "' has no <output>");
    op.inputs = resolve(*input, op.name + "Request").parts;
    const Message& out = resolve(*output, op.name + "Response");
    if (out.parts.empty()) fail(*out.element, "response message needs at least one part");
    op.outputs = out.parts;
    return op;
  }

  static std::string read_service(const xml::Element& el, const std::string& service_name,
                                  const std::string& port_name) {
    only_attributes(el, {"name"});
    if (required_attr(el, "name") != service_name) {
      fail(el, "service must be named '" + service_name + "'");
    }
    if (el.children.size() != 1 || el.children[0].name != "port") {
      fail(el, "<service> must contain exactly one <port>");
    }
    const auto& port = el.children[0];
    only_attributes(port, {"name"});
    if (required_attr(port, "name") != port_name) fail(port, "port must be named '" + port_name + "'");
    if (port.children.size() != 1 || port.children[0].name != "address") {
      fail(port, "<port> must contain exactly one <address>");
    }
    const auto& address = port.children[0];
    only_attributes(address, {"location"});
    no_children(address);
    const std::string& location = required_attr(address, "location");
    if (!endpoint_node_id(location)) fail(address, "location '" + location + "' is not node://<id>");
    return location;
  }

  std::map<std::string, Message> messages_;
  std::set<std::string> referenced_;
};

}  // namespace

ServiceDescriptor parse_descriptor(std::string_view text) {
  xml::Element root;
  try {
    root = xml::parse(text);
  } catch (const xml::ParseError& e) {
    throw SyntaxError("line " + std::to_string(e.line()) + ": " + e.what(), e.line(), "");
  }
  return SchemaReader().read(root);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

void write_message(std::string& out, const std::string& name, const std::vector<ParamSpec>& parts) {
  out += "  <message name=\"" + xml::escape_attribute(name) + "\"";
  if (parts.empty()) {
    out += "/>\n";
    return;
  }
  out += ">\n";
  for (const auto& p : parts) {
    out += "    <part name=\"" + xml::escape_attribute(p.name) + "\" type=\"" +
           std::string(to_string(p.type)) + "\"/>\n";
  }
  out += "  </message>\n";
}

}  // namespace

std::string serialize_descriptor(const ServiceDescriptor& d) {
  auto violations = validate_descriptor(d);
  if (!violations.empty()) throw InvariantError(std::move(violations));

  std::map<std::string, const std::vector<ParamSpec>*> messages;
  for (const auto& op : d.operations) {
    messages.emplace(op.name + "Request", &op.inputs);
    messages.emplace(op.name + "Response", &op.outputs);
  }

  const std::string name = xml::escape_attribute(d.service_name);
  std::string out = "<definitions name=\"" + name + "\">\n";
  for (const auto& [msg_name, parts] : messages) write_message(out, msg_name, *parts);

  out += "  <portType name=\"" + name + "Port\"";
  if (d.operations.empty()) {
    out += "/>\n";
  } else {
    out += ">\n";
    for (const auto& op : d.operations) {
      out += "    <operation name=\"" + op.name + "\">\n";
      out += "      <input message=\"" + op.name + "Request\"/>\n";
      out += "      <output message=\"" + op.name + "Response\"/>\n";
      out += "    </operation>\n";
    }
    out += "  </portType>\n";
  }
  out += "  <service name=\"" + name + "\">\n";
  out += "    <port name=\"" + name + "Port\">\n";
  out += "      <address location=\"" + xml::escape_attribute(d.endpoint) + "\"/>\n";
  out += "    </port>\n";
  out += "  </service>\n";
  out += "</definitions>\n";
  return out;
}

}  // namespace soacomp
