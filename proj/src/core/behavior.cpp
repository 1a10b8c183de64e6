#include "soacomp/behavior.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace soacomp {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void row_error(std::size_t line, const std::string& msg) {
  throw BehaviorError("catalog line " + std::to_string(line) + ": " + msg);
}

ParamType column_type(CatalogColumn c) {
  switch (c) {
    case CatalogColumn::InStock: return ParamType::Flag;
    case CatalogColumn::DeliveryDays: return ParamType::Integer;
    case CatalogColumn::Price: return ParamType::Real;
  }
  return ParamType::Text;
}

std::string_view column_name(CatalogColumn c) {
  switch (c) {
    case CatalogColumn::InStock: return "in_stock";
    case CatalogColumn::DeliveryDays: return "delivery_days";
    case CatalogColumn::Price: return "price";
  }
  return "?";
}

class CatalogBehavior final : public Behavior {
 public:
  CatalogBehavior(std::vector<CatalogRow> rows, std::vector<CatalogBinding> bindings)
      : rows_(std::move(rows)), bindings_(std::move(bindings)) {
    if (bindings_.empty()) {
      bindings_ = {{"value", CatalogColumn::InStock},
                   {"date", CatalogColumn::DeliveryDays},
                   {"price", CatalogColumn::Price}};
    }
    for (const auto& b : bindings_) outputs_.push_back({b.output, column_type(b.column)});
    for (std::size_t i = 0; i < rows_.size(); ++i) index_.emplace(rows_[i].name, i);
  }

  std::string_view key() const override { return "catalog"; }
  const std::vector<ParamSpec>& declared_outputs() const override { return outputs_; }

  std::optional<std::string> incompatibility(const OperationSignature& sig) const override {
    if (sig.inputs.size() != 1 || sig.inputs[0].type != ParamType::Text) {
      return "catalog operations take exactly one text input";
    }
    if (sig.outputs != outputs_) return "signature outputs differ from the catalog columns";
    return std::nullopt;
  }

  ValueMap execute(const OperationSignature& sig, const ValueMap& args) const override {
    const std::string& key = args.at(sig.inputs[0].name).as_text();
    auto it = index_.find(key);
    const CatalogRow* row = it == index_.end() ? nullptr : &rows_[it->second];
    ValueMap out;
    for (const auto& b : bindings_) {
      switch (b.column) {
        case CatalogColumn::InStock:
          out[b.output] = Value::flag(row && row->in_stock);
          break;
        case CatalogColumn::DeliveryDays:
          out[b.output] = Value::integer(row ? row->delivery_days : 0);
          break;
        case CatalogColumn::Price:
          out[b.output] = Value::real(row ? row->price : 0.0);
          break;
      }
    }
    return out;
  }

  Json to_json() const override {
    Json j;
    j["key"] = "catalog";
    Json rows = Json::array();
    for (const auto& r : rows_) rows.push_back(Json::array({r.name, r.delivery_days, r.price, r.in_stock}));
    j["rows"] = std::move(rows);
    Json cols = Json::array();
    for (const auto& b : bindings_) cols.push_back(Json::array({b.output, std::string(column_name(b.column))}));
    j["columns"] = std::move(cols);
    return j;
  }

 private:
  std::vector<CatalogRow> rows_;
  std::vector<CatalogBinding> bindings_;
  std::vector<ParamSpec> outputs_;
  std::map<std::string, std::size_t> index_;  // first row wins on duplicate names
};

bool integral(double v) { return std::isfinite(v) && std::floor(v) == v; }

class AffineBehavior final : public Behavior {
 public:
  explicit AffineBehavior(std::vector<AffineRule> rules) : rules_(std::move(rules)) {
    for (const auto& r : rules_) {
      outputs_.push_back({r.output, r.type});
      if ((r.type == ParamType::Integer || r.type == ParamType::Date) &&
          (!integral(r.scale) || !integral(r.offset))) {
        throw BehaviorError("integer rule '" + r.output + "' needs integral scale and offset");
      }
    }
  }

  std::string_view key() const override { return "affine"; }
  const std::vector<ParamSpec>& declared_outputs() const override { return outputs_; }

  std::optional<std::string> incompatibility(const OperationSignature& sig) const override {
    if (sig.outputs != outputs_) return "signature outputs differ from the affine rules";
    for (const auto& r : rules_) {
      if (!r.from) continue;
      const ParamSpec* in = nullptr;
      for (const auto& p : sig.inputs) {
        if (p.name == *r.from) in = &p;
      }
      if (!in) return "rule '" + r.output + "' reads missing input '" + *r.from + "'";
      if (!compatible(r.type, in->type)) {
        return "rule '" + r.output + "' cannot derive " + std::string(to_string(r.type)) + " from " +
               std::string(to_string(in->type));
      }
    }
    return std::nullopt;
  }

  ValueMap execute(const OperationSignature&, const ValueMap& args) const override {
    ValueMap out;
    for (const auto& r : rules_) {
      const Value* in = r.from ? &args.at(*r.from) : nullptr;
      out[r.output] = apply(r, in);
    }
    return out;
  }

  Json to_json() const override {
    Json j;
    j["key"] = "affine";
    Json rules = Json::array();
    for (const auto& r : rules_) {
      Json rule;
      rule["output"] = r.output;
      rule["type"] = std::string(to_string(r.type));
      if (r.from) rule["from"] = *r.from;
      rule["scale"] = r.scale;
      rule["offset"] = r.offset;
      if (!r.prefix.empty()) rule["prefix"] = r.prefix;
      rules.push_back(std::move(rule));
    }
    j["rules"] = std::move(rules);
    return j;
  }

 private:
  static bool compatible(ParamType out, ParamType in) {
    switch (out) {
      case ParamType::Integer:
      case ParamType::Date:
        return in == ParamType::Integer || in == ParamType::Date;
      case ParamType::Real:
        return in == ParamType::Integer || in == ParamType::Date || in == ParamType::Real;
      case ParamType::Flag:
        return in != ParamType::Text;
      case ParamType::Text:
        return in == ParamType::Text;
    }
    return false;
  }

  static Value apply(const AffineRule& r, const Value* in) {
    switch (r.type) {
      case ParamType::Integer:
      case ParamType::Date: {
        auto scale = static_cast<std::int64_t>(r.scale);
        auto offset = static_cast<std::int64_t>(r.offset);
        std::int64_t v = in ? in->as_integer() * scale + offset : offset;
        return r.type == ParamType::Date ? Value::date(v) : Value::integer(v);
      }
      case ParamType::Real:
        return Value::real(in ? in->numeric() * r.scale + r.offset : r.offset);
      case ParamType::Flag:
        if (!in) return Value::flag(r.offset != 0.0);
        if (in->type() == ParamType::Flag) return Value::flag(r.scale < 0 ? !in->as_flag() : in->as_flag());
        return Value::flag(in->numeric() > r.offset);
      case ParamType::Text:
        return Value::text(in ? r.prefix + in->as_text() : r.prefix);
    }
    return Value();
  }

  std::vector<AffineRule> rules_;
  std::vector<ParamSpec> outputs_;
};

std::optional<CatalogColumn> parse_column(std::string_view s) {
  if (s == "in_stock") return CatalogColumn::InStock;
  if (s == "delivery_days") return CatalogColumn::DeliveryDays;
  if (s == "price") return CatalogColumn::Price;
  return std::nullopt;
}

}  // namespace

std::vector<CatalogRow> parse_catalog(std::string_view text) {
  std::vector<CatalogRow> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    for (;;) {
      std::size_t bar = line.find('|', start);
      cols.push_back(trim(line.substr(start, bar == std::string_view::npos ? bar : bar - start)));
      if (bar == std::string_view::npos) break;
      start = bar + 1;
    }
    if (cols.size() != 4) row_error(line_no, "expected 4 '|'-separated columns, got " + std::to_string(cols.size()));
    CatalogRow row;
    row.name = std::string(cols[0]);
    if (row.name.empty()) row_error(line_no, "empty name");
    auto [p1, e1] = std::from_chars(cols[1].data(), cols[1].data() + cols[1].size(), row.delivery_days);
    if (e1 != std::errc() || p1 != cols[1].data() + cols[1].size()) row_error(line_no, "bad delivery_days");
    try {
      std::size_t used = 0;
      row.price = std::stod(std::string(cols[2]), &used);
      if (used != cols[2].size()) row_error(line_no, "bad price");
    } catch (const std::logic_error&) {
      row_error(line_no, "bad price");
    }
    if (cols[3] == "true" || cols[3] == "1") row.in_stock = true;
    else if (cols[3] == "false" || cols[3] == "0") row.in_stock = false;
    else row_error(line_no, "in_stock must be true/false/1/0");
    rows.push_back(std::move(row));
    if (end == text.size()) break;
  }
  return rows;
}

std::vector<CatalogRow> load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw BehaviorError("cannot read catalog fixture '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_catalog(buf.str());
  } catch (const BehaviorError& e) {
    throw BehaviorError(path.string() + ": " + e.what());
  }
}

BehaviorPtr make_catalog_behavior(std::vector<CatalogRow> rows, std::vector<CatalogBinding> bindings) {
  return std::make_shared<CatalogBehavior>(std::move(rows), std::move(bindings));
}

BehaviorPtr make_affine_behavior(std::vector<AffineRule> rules) {
  return std::make_shared<AffineBehavior>(std::move(rules));
}

BehaviorPtr make_behavior(const Json& spec, const std::filesystem::path& base_dir) {
  if (!spec.is_object() || !spec.contains("key") || !spec["key"].is_string()) {
    throw BehaviorError("behavior needs a string 'key'");
  }
  const std::string key = spec["key"].get<std::string>();
  try {
    if (key == "catalog") {
      std::vector<CatalogRow> rows;
      if (spec.contains("fixture")) {
        std::filesystem::path p = spec["fixture"].get<std::string>();
        rows = load_catalog(p.is_absolute() ? p : base_dir / p);
      } else if (spec.contains("rows")) {
        for (const auto& r : spec["rows"]) {
          if (!r.is_array() || r.size() != 4) throw BehaviorError("inline catalog rows have 4 entries");
          rows.push_back({r[0].get<std::string>(), r[1].get<std::int64_t>(), r[2].get<double>(), r[3].get<bool>()});
        }
      } else {
        throw BehaviorError("catalog behavior needs 'fixture' or 'rows'");
      }
      std::vector<CatalogBinding> bindings;
      if (spec.contains("columns")) {
        for (const auto& c : spec["columns"]) {
          if (!c.is_array() || c.size() != 2) throw BehaviorError("catalog columns are [output, column] pairs");
          auto col = parse_column(c[1].get<std::string>());
          if (!col) throw BehaviorError("unknown catalog column '" + c[1].get<std::string>() + "'");
          bindings.push_back({c[0].get<std::string>(), *col});
        }
      }
      return make_catalog_behavior(std::move(rows), std::move(bindings));
    }
    if (key == "affine") {
      if (!spec.contains("rules") || !spec["rules"].is_array()) throw BehaviorError("affine behavior needs 'rules'");
      std::vector<AffineRule> rules;
      for (const auto& r : spec["rules"]) {
        AffineRule rule;
        rule.output = r.at("output").get<std::string>();
        auto type = parse_param_type(r.at("type").get<std::string>());
        if (!type) throw BehaviorError("unknown type in affine rule '" + rule.output + "'");
        rule.type = *type;
        if (r.contains("from")) rule.from = r["from"].get<std::string>();
        rule.scale = r.value("scale", 1.0);
        rule.offset = r.value("offset", 0.0);
        rule.prefix = r.value("prefix", std::string());
        rules.push_back(std::move(rule));
      }
      return make_affine_behavior(std::move(rules));
    }
  } catch (const nlohmann::json::exception& e) {
    throw BehaviorError("behavior '" + key + "': " + e.what());
  }
  throw BehaviorError("unknown behavior key '" + key + "'");
}

}  // namespace soacomp
