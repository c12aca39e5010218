#pragma once

// Experiment configs: schema validation with defaults, canonical echo, and a JSON
// emitter with fixed 17-significant-digit floats.

#include "hemet/quot.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace hemet::cli {

using json = nlohmann::ordered_json;

struct ConfigError : std::runtime_error {
  std::vector<std::string> violations;
  explicit ConfigError(std::vector<std::string> v) : std::runtime_error(join(v)), violations(std::move(v)) {}
  static std::string join(const std::vector<std::string>& v) {
    std::string s = "invalid config:";
    for (const auto& x : v) s += "\n  " + x;
    return s;
  }
};

enum class Kind { integer, number, string, boolean, int_list, number_list, string_list, object, zeta };

struct Field {
  std::string name;
  Kind kind;
  json def;  // null: required (or absent when optional)
  bool required = false;
  std::vector<Field> sub;  // Kind::object
};

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c = {"bergman", "mdon", "mna", "slope-test", "solve", "audit-deltabound", "probe-coercivity",
                                             "convexity-audit"};
  return c;
}

inline std::string block_name(const std::string& command) {
  std::string s = command;
  for (auto& ch : s)
    if (ch == '-') ch = '_';
  return s;
}

inline std::vector<Field> schema() {
  using K = Kind;
  return {
      {"bundle", K::int_list, nullptr, true, {}},
      {"k", K::integer, nullptr, false, {}},
      {"quadrature", K::object, json::object(), false, {{"n_colat", K::integer, 24}, {"n_angle", K::integer, 24}}},
      {"seed", K::integer, 0},
      {"output_dir", K::string, ""},
      {"zeta", K::zeta, nullptr},
      {"bergman", K::object, json::object(), false,
       {{"k_list", K::int_list, nullptr}, {"metric", K::string, "standard"}, {"level", K::integer, 3}, {"scale", K::number, 0.5}}},
      {"mdon", K::object, json::object(), false,
       {{"triples", K::integer, 5}, {"scale", K::number, 0.3}, {"path", K::string, "automatic"},
        {"scale_factors", K::number_list, json::array({-5, -1, 1, 5})}}},
      {"mna", K::object, json::object(), false, {}},
      {"slope_test", K::object, json::object(), false,
       {{"t_max", K::number, 30}, {"n_t", K::integer, 31}, {"tolerance", K::number, 0.1}}},
      {"solve", K::object, json::object(), false,
       {{"max_iter", K::integer, 400},
        {"grad_tol", K::number, 1e-12},
        {"he_tol", K::number, 1e-6},
        {"armijo", K::number, 1e-4},
        {"step0", K::number, 1},
        {"shrink", K::number, 0.5},
        {"max_backtracks", K::integer, 40},
        {"max_log_step", K::number, 4},
        {"memory", K::integer, 8},
        {"divergence_norm", K::number, 40},
        {"divergence_mdon", K::number, -1000},
        {"init", K::string, "l2"},
        {"init_scale", K::number, 0.3},
        {"rounding_tol", K::number, 1e-4}}},
      {"audit_deltabound", K::object, json::object(), false,
       {{"samples", K::integer, 50}, {"min_scale", K::number, 0.05}, {"max_scale", K::number, 1.0}, {"allow_reducible", K::boolean, false}}},
      {"probe_coercivity", K::object, json::object(), false,
       {{"k_list", K::int_list, nullptr}, {"samples", K::integer, 3}, {"t_max", K::number, 10}, {"n_t", K::integer, 6}}},
      {"convexity_audit", K::object, json::object(), false,
       {{"geodesics", K::integer, 10}, {"scale", K::number, 0.3}, {"s_values", K::number_list, json::array({0, 0.5, 1})}}},
  };
}

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::integer: return "an integer";
    case Kind::number: return "a number";
    case Kind::string: return "a string";
    case Kind::boolean: return "a boolean";
    case Kind::int_list: return "a list of integers";
    case Kind::number_list: return "a list of numbers";
    case Kind::string_list: return "a list of strings";
    case Kind::object: return "an object";
    case Kind::zeta: return "a weight spec";
  }
  return "?";
}

inline bool has_kind(const json& v, Kind k) {
  auto all = [&](auto pred) {
    if (!v.is_array()) return false;
    for (const auto& e : v)
      if (!pred(e)) return false;
    return true;
  };
  switch (k) {
    case Kind::integer: return v.is_number_integer();
    case Kind::number: return v.is_number();
    case Kind::string: return v.is_string();
    case Kind::boolean: return v.is_boolean();
    case Kind::int_list: return all([](const json& e) { return e.is_number_integer(); });
    case Kind::number_list: return all([](const json& e) { return e.is_number(); });
    case Kind::string_list: return all([](const json& e) { return e.is_string(); });
    case Kind::object: return v.is_object();
    case Kind::zeta: return v.is_object();
  }
  return false;
}

inline mpq_class parse_rational(const json& v) {
  if (v.is_number_integer()) return mpq_class(v.get<long>());
  if (!v.is_string()) throw argument_error("expected an integer or a \"p/q\" string");
  mpq_class q;
  if (q.set_str(v.get<std::string>(), 10) != 0) throw argument_error("not a rational: \"" + v.get<std::string>() + "\"");
  if (q.get_den() == 0) throw argument_error("zero denominator");
  q.canonicalize();
  return q;
}

// An entry is a rational, or [re, im] with rational parts.
inline GQ parse_gaussian(const json& v) {
  if (v.is_array()) {
    if (v.size() != 2) throw argument_error("a complex entry is [re, im]");
    return GQ(parse_rational(v[0]), parse_rational(v[1]));
  }
  return GQ(parse_rational(v));
}

inline void check_zeta(const json& z, const std::string& path, std::vector<std::string>& errs) {
  bool sw = z.contains("summand_weights"), bl = z.contains("blocks");
  for (auto it = z.begin(); it != z.end(); ++it)
    if (it.key() != "summand_weights" && it.key() != "blocks") errs.push_back(path + "." + it.key() + ": unknown key");
  if (sw == bl) {
    errs.push_back(path + ": give exactly one of \"summand_weights\" and \"blocks\"");
    return;
  }
  auto rational_ok = [&](const json& v, const std::string& p) {
    try {
      parse_rational(v);
    } catch (const argument_error& e) {
      errs.push_back(p + ": " + e.what());
    }
  };
  if (sw) {
    if (!z["summand_weights"].is_array()) {
      errs.push_back(path + ".summand_weights: must be a list of rationals");
      return;
    }
    for (std::size_t i = 0; i < z["summand_weights"].size(); ++i)
      rational_ok(z["summand_weights"][i], path + ".summand_weights[" + std::to_string(i) + "]");
    return;
  }
  const json& blocks = z["blocks"];
  if (!blocks.is_array() || blocks.empty()) {
    errs.push_back(path + ".blocks: must be a nonempty list");
    return;
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    std::string bp = path + ".blocks[" + std::to_string(b) + "]";
    const json& blk = blocks[b];
    if (!blk.is_object()) {
      errs.push_back(bp + ": must be an object");
      continue;
    }
    for (auto it = blk.begin(); it != blk.end(); ++it)
      if (it.key() != "w" && it.key() != "vectors") errs.push_back(bp + "." + it.key() + ": unknown key");
    if (!blk.contains("w"))
      errs.push_back(bp + ".w: missing");
    else
      rational_ok(blk["w"], bp + ".w");
    if (!blk.contains("vectors") || !blk["vectors"].is_array()) {
      errs.push_back(bp + ".vectors: must be a list of vectors");
      continue;
    }
    for (std::size_t i = 0; i < blk["vectors"].size(); ++i) {
      const json& v = blk["vectors"][i];
      std::string vp = bp + ".vectors[" + std::to_string(i) + "]";
      if (!v.is_array()) {
        errs.push_back(vp + ": must be a list of entries");
        continue;
      }
      for (std::size_t j = 0; j < v.size(); ++j) {
        try {
          parse_gaussian(v[j]);
        } catch (const argument_error& e) {
          errs.push_back(vp + "[" + std::to_string(j) + "]: " + e.what());
        }
      }
    }
  }
}

inline json normalized(const json& v, Kind k) {
  if (k == Kind::number) return v.get<double>();
  if (k == Kind::number_list) {
    json out = json::array();
    for (const auto& e : v) out.push_back(e.get<double>());
    return out;
  }
  return v;
}

// Fills defaults and collects every violation.
inline json validate_fields(const json& in, const std::vector<Field>& fields, const std::string& prefix, std::vector<std::string>& errs) {
  json out = json::object();
  std::map<std::string, const Field*> known;
  for (const auto& f : fields) known[f.name] = &f;
  for (auto it = in.begin(); it != in.end(); ++it)
    if (!known.count(it.key())) errs.push_back(prefix + it.key() + ": unknown key");
  for (const auto& f : fields) {
    const std::string path = prefix + f.name;
    if (!in.contains(f.name)) {
      if (f.required)
        errs.push_back(path + ": missing required field");
      else if (f.kind == Kind::object && !f.def.is_null())
        out[f.name] = validate_fields(json::object(), f.sub, path + ".", errs);
      else if (!f.def.is_null())
        out[f.name] = normalized(f.def, f.kind);
      continue;
    }
    const json& v = in[f.name];
    if (!has_kind(v, f.kind)) {
      errs.push_back(path + ": must be " + std::string(kind_name(f.kind)));
      continue;
    }
    if (f.kind == Kind::object)
      out[f.name] = validate_fields(v, f.sub, path + ".", errs);
    else if (f.kind == Kind::zeta) {
      check_zeta(v, path, errs);
      out[f.name] = v;
    } else
      out[f.name] = normalized(v, f.kind);
  }
  return out;
}

inline json validate_config(const json& in) {
  std::vector<std::string> errs;
  if (!in.is_object()) throw ConfigError({"<root>: must be an object"});
  json c = validate_fields(in, schema(), "", errs);
  if (c.contains("bundle")) {
    if (c["bundle"].empty()) errs.push_back("bundle: must list at least one degree");
    else {
      BundleSpec spec(c["bundle"].get<std::vector<int>>());
      int min_k = regularity(spec);
      if (!c.contains("k")) c["k"] = std::max(1, min_k);
      auto check_k = [&](const json& k, const std::string& path) {
        if (k.get<int>() < min_k)
          errs.push_back(path + ": k = " + std::to_string(k.get<int>()) + " is below the regularity of " + spec.str() +
                         "; minimum admissible k is " + std::to_string(min_k));
      };
      if (c["k"].is_number_integer()) check_k(c["k"], "k");
      for (const char* blk : {"bergman", "probe_coercivity"})
        if (c.contains(blk) && c[blk].contains("k_list"))
          for (std::size_t i = 0; i < c[blk]["k_list"].size(); ++i)
            check_k(c[blk]["k_list"][i], std::string(blk) + ".k_list[" + std::to_string(i) + "]");
    }
  }
  if (c.contains("quadrature"))
    for (const char* key : {"n_colat", "n_angle"})
      if (c["quadrature"].contains(key) && c["quadrature"][key].is_number_integer() && c["quadrature"][key].get<int>() < 2)
        errs.push_back(std::string("quadrature.") + key + ": must be at least 2");
  if (c.contains("mdon") && c["mdon"].contains("path")) {
    auto p = c["mdon"]["path"].get<std::string>();
    if (p != "automatic" && p != "bergman" && p != "pointwise_exponential")
      errs.push_back("mdon.path: must be one of automatic, bergman, pointwise_exponential");
  }
  if (c.contains("bergman") && c["bergman"].contains("metric")) {
    auto m = c["bergman"]["metric"].get<std::string>();
    if (m != "standard" && m != "fs") errs.push_back("bergman.metric: must be \"standard\" or \"fs\"");
  }
  if (c.contains("solve") && c["solve"].contains("init")) {
    auto m = c["solve"]["init"].get<std::string>();
    if (m != "l2" && m != "random") errs.push_back("solve.init: must be \"l2\" or \"random\"");
  }
  if (!errs.empty()) throw ConfigError(errs);
  return c;
}

inline json parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("parse error at byte ") + std::to_string(e.byte) + ": " + e.what()});
  }
  return validate_config(j);
}

inline json parse_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError({"cannot read " + path});
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

inline WeightSpec weight_spec(const json& cfg) {
  if (!cfg.contains("zeta")) throw argument_error("this command needs a \"zeta\" block");
  BundleSpec spec(cfg["bundle"].get<std::vector<int>>());
  const int k = cfg["k"].get<int>();
  const json& z = cfg["zeta"];
  if (z.contains("summand_weights")) {
    std::vector<mpq_class> w;
    for (const auto& x : z["summand_weights"]) w.push_back(parse_rational(x));
    return summand_weight_spec(spec, k, w);
  }
  WeightSpec out;
  out.k = k;
  for (const auto& blk : z["blocks"]) {
    WeightBlock b{parse_rational(blk["w"]), {}};
    for (const auto& v : blk["vectors"]) {
      std::vector<GQ> vec;
      for (const auto& e : v) vec.push_back(parse_gaussian(e));
      b.vectors.push_back(vec);
    }
    out.blocks.push_back(b);
  }
  return out;
}

inline std::string rational_string(const mpq_class& q) { return exact::to_string(q); }

inline void emit(const json& j, std::string& out, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' '), end(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad + json(it.key()).dump() + ": ";
        emit(it.value(), out, indent, depth + 1);
      }
      out += "\n" + end + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        emit(j[i], out, indent, depth + 1);
      }
      out += "\n" + end + "]";
      return;
    }
    case json::value_t::number_float: {
      double v = j.get<double>();
      if (!std::isfinite(v)) {
        out += std::isnan(v) ? "\"nan\"" : (v > 0 ? "\"inf\"" : "\"-inf\"");
        return;
      }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += buf;
      return;
    }
    default: out += j.dump();
  }
}

inline std::string emit(const json& j) {
  std::string s;
  emit(j, s, 2, 0);
  return s + "\n";
}

}  // namespace hemet::cli
