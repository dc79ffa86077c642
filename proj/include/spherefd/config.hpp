#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "spherefd/errors.hpp"
#include "spherefd/geometry.hpp"
#include "spherefd/kernels.hpp"
#include "spherefd/solver.hpp"

namespace spherefd {

struct OperatorSpec {
  int kappa = 1;
  double alpha = 1.0;
};

struct KernelSpec {
  KernelFamily family = KernelFamily::wendland;
  double param = 3.0;
  double eps = 1.0;
};

struct NodesSpec {
  std::string type = "fibonacci";  // fibonacci | random | csv
  int n = 500;
  std::uint64_t seed = 0;
  std::string path;  // only for type = csv
};

struct AtlasSpec {
  int nu_star = 0;  // 0: resolved from dim (30 on the sphere, 10 on the circle)
  double beta = 1.5;
  int order = 4;
  int lebesgue_samples = 256;
  double cond_limit = 1e12;
};

struct HarmonicTerm {
  int l = 2;
  int m = 1;
  double coeff = 1.0;
};

struct SolverSpec {
  SolveMethod method = SolveMethod::normal_cg;
  double tol = 1e-10;
  int max_iter = 0;  // 0: 10 n
};

struct ExperimentConfig {
  int dim = 2;
  OperatorSpec op;
  KernelSpec kernel;
  NodesSpec nodes;
  AtlasSpec atlas;
  std::vector<HarmonicTerm> solution{{2, 1, 1.0}};
  SolverSpec solver;
  std::string out_dir = "out";
  std::vector<int> n_list{500, 2000, 8000};

  ManifoldDim manifold() const { return ManifoldDim(dim); }
  int resolved_nu_star() const {
    return atlas.nu_star > 0 ? atlas.nu_star : (dim == 2 ? 30 : 10);
  }
};

namespace cfg {

struct Value {
  enum class Kind { number, string, boolean, array, table };
  Kind kind = Kind::number;
  double num = 0.0;
  std::string str;
  bool flag = false;
  std::vector<Value> array;
  std::vector<std::pair<std::string, Value>> table;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : s_(text) {}

  void skip() {
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  bool done() { skip(); return pos_ >= s_.size(); }
  char peek() { skip(); return pos_ < s_.size() ? s_[pos_] : '\0'; }

  bool eat(char c) {
    if (peek() == c) { ++pos_; return true; }
    return false;
  }

  void expect(char c, const std::string& key) {
    if (!eat(c)) {
      throw ConfigError("expected '" + std::string(1, c) + "' near offset " +
                            std::to_string(pos_) + " while reading '" + key + "'",
                        key);
    }
  }

  std::string ident(const std::string& key) {
    skip();
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
      ++pos_;
    }
    if (start == pos_) {
      throw ConfigError("expected an identifier near offset " + std::to_string(pos_), key);
    }
    return s_.substr(start, pos_ - start);
  }

  std::string string_lit(const std::string& key) {
    expect('"', key);
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') out.push_back(s_[pos_++]);
    if (pos_ >= s_.size()) throw ConfigError("unterminated string literal", key);
    ++pos_;
    return out;
  }

  double number(const std::string& key) {
    skip();
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) {
      throw ConfigError("expected a number near offset " + std::to_string(pos_), key);
    }
    pos_ += static_cast<std::size_t>(end - begin);
    return v;
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
};

inline Value parse_value(Lexer& lex, const std::string& key) {
  Value v;
  const char c = lex.peek();
  if (c == '"') {
    v.kind = Value::Kind::string;
    v.str = lex.string_lit(key);
  } else if (c == '{') {
    lex.expect('{', key);
    v.kind = Value::Kind::table;
    if (!lex.eat('}')) {
      while (true) {
        std::string name = lex.ident(key);
        lex.expect('=', key + "." + name);
        v.table.emplace_back(name, parse_value(lex, key + "." + name));
        if (lex.eat('}')) break;
        lex.expect(',', key);
      }
    }
  } else if (c == '[') {
    lex.expect('[', key);
    v.kind = Value::Kind::array;
    if (!lex.eat(']')) {
      while (true) {
        v.array.push_back(parse_value(lex, key));
        if (lex.eat(']')) break;
        lex.expect(',', key);
      }
    }
  } else if (std::isalpha(static_cast<unsigned char>(c))) {
    const std::string word = lex.ident(key);
    if (word == "true" || word == "false") {
      v.kind = Value::Kind::boolean;
      v.flag = (word == "true");
    } else {
      throw ConfigError("unexpected bare word '" + word + "' in value of '" + key + "'", key);
    }
  } else {
    v.kind = Value::Kind::number;
    v.num = lex.number(key);
  }
  return v;
}

inline double as_number(const Value& v, const std::string& key) {
  if (v.kind != Value::Kind::number) throw ConfigError("'" + key + "' must be a number", key);
  return v.num;
}

inline int as_int(const Value& v, const std::string& key) {
  const double x = as_number(v, key);
  const double r = std::nearbyint(x);
  if (std::abs(x - r) > 1e-9) throw ConfigError("'" + key + "' must be an integer", key);
  return static_cast<int>(r);
}

inline std::string as_string(const Value& v, const std::string& key) {
  if (v.kind != Value::Kind::string) throw ConfigError("'" + key + "' must be a string", key);
  return v.str;
}

inline const Value* find(const Value& table, const std::string& name) {
  for (const auto& [k, v] : table.table) {
    if (k == name) return &v;
  }
  return nullptr;
}

inline void reject_unknown(const Value& table, const std::string& scope,
                           std::initializer_list<const char*> known) {
  for (const auto& [k, v] : table.table) {
    bool ok = false;
    for (const char* name : known) {
      if (k == name) { ok = true; break; }
    }
    if (!ok) {
      const std::string full = scope.empty() ? k : scope + "." + k;
      throw ConfigError("unknown configuration key '" + full + "'", full);
    }
  }
}

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace cfg

/// Parses the key-table configuration format.  Unknown keys, type mismatches
/// and out-of-range values raise ConfigError carrying the offending key.
inline ExperimentConfig parse_config(const std::string& text) {
  cfg::Lexer lex(text);
  cfg::Value root;
  root.kind = cfg::Value::Kind::table;
  while (!lex.done()) {
    std::string key = lex.ident("");
    lex.expect('=', key);
    if (cfg::find(root, key) != nullptr) {
      throw ConfigError("duplicate configuration key '" + key + "'", key);
    }
    root.table.emplace_back(key, cfg::parse_value(lex, key));
  }
  cfg::reject_unknown(root, "",
                      {"dim", "operator", "kernel", "nodes", "atlas", "solution",
                       "solver", "out_dir", "n_list"});

  ExperimentConfig c;
  if (const auto* v = cfg::find(root, "dim")) c.dim = cfg::as_int(*v, "dim");
  if (c.dim != 1 && c.dim != 2) throw ConfigError("'dim' must be 1 or 2", "dim");

  if (const auto* v = cfg::find(root, "operator")) {
    cfg::reject_unknown(*v, "operator", {"kappa", "alpha"});
    if (const auto* x = cfg::find(*v, "kappa")) c.op.kappa = cfg::as_int(*x, "operator.kappa");
    if (const auto* x = cfg::find(*v, "alpha")) c.op.alpha = cfg::as_number(*x, "operator.alpha");
    if (c.op.kappa < 1) throw ConfigError("'operator.kappa' must be >= 1", "operator.kappa");
    if (!(c.op.alpha > 0.0)) throw ConfigError("'operator.alpha' must be positive", "operator.alpha");
  }

  if (const auto* v = cfg::find(root, "kernel")) {
    cfg::reject_unknown(*v, "kernel", {"family", "param", "eps"});
    if (const auto* x = cfg::find(*v, "family")) {
      const std::string fam = cfg::as_string(*x, "kernel.family");
      if (fam == "matern") c.kernel.family = KernelFamily::matern;
      else if (fam == "wendland") c.kernel.family = KernelFamily::wendland;
      else throw ConfigError("'kernel.family' must be \"matern\" or \"wendland\"", "kernel.family");
    }
    if (const auto* x = cfg::find(*v, "param")) c.kernel.param = cfg::as_number(*x, "kernel.param");
    if (const auto* x = cfg::find(*v, "eps")) c.kernel.eps = cfg::as_number(*x, "kernel.eps");
    try {
      if (c.kernel.family == KernelFamily::matern) {
        matern_profile(c.kernel.param, c.kernel.eps);
      } else {
        wendland_profile(static_cast<int>(std::lround(c.kernel.param)), c.kernel.eps);
      }
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("invalid kernel spec: ") + e.what(), "kernel.param");
    }
  }

  if (const auto* v = cfg::find(root, "nodes")) {
    cfg::reject_unknown(*v, "nodes", {"type", "n", "seed", "path"});
    if (const auto* x = cfg::find(*v, "type")) c.nodes.type = cfg::as_string(*x, "nodes.type");
    if (const auto* x = cfg::find(*v, "n")) c.nodes.n = cfg::as_int(*x, "nodes.n");
    if (const auto* x = cfg::find(*v, "seed")) {
      c.nodes.seed = static_cast<std::uint64_t>(cfg::as_number(*x, "nodes.seed"));
    }
    if (const auto* x = cfg::find(*v, "path")) c.nodes.path = cfg::as_string(*x, "nodes.path");
    if (c.nodes.type != "fibonacci" && c.nodes.type != "random" && c.nodes.type != "csv") {
      throw ConfigError("'nodes.type' must be fibonacci, random or csv", "nodes.type");
    }
    if (c.nodes.type == "csv" && c.nodes.path.empty()) {
      throw ConfigError("'nodes.path' is required for csv nodes", "nodes.path");
    }
    if (c.nodes.type != "csv" && c.nodes.n < 2) {
      throw ConfigError("'nodes.n' must be >= 2", "nodes.n");
    }
  }

  if (const auto* v = cfg::find(root, "atlas")) {
    cfg::reject_unknown(*v, "atlas",
                        {"nu_star", "beta", "order", "lebesgue_samples", "cond_limit"});
    if (const auto* x = cfg::find(*v, "nu_star")) c.atlas.nu_star = cfg::as_int(*x, "atlas.nu_star");
    if (const auto* x = cfg::find(*v, "beta")) c.atlas.beta = cfg::as_number(*x, "atlas.beta");
    if (const auto* x = cfg::find(*v, "order")) c.atlas.order = cfg::as_int(*x, "atlas.order");
    if (const auto* x = cfg::find(*v, "lebesgue_samples")) {
      c.atlas.lebesgue_samples = cfg::as_int(*x, "atlas.lebesgue_samples");
    }
    if (const auto* x = cfg::find(*v, "cond_limit")) {
      c.atlas.cond_limit = cfg::as_number(*x, "atlas.cond_limit");
    }
    if (!(c.atlas.beta > 1.0)) throw ConfigError("'atlas.beta' must exceed 1", "atlas.beta");
    if (c.atlas.order < 1) throw ConfigError("'atlas.order' must be >= 1", "atlas.order");
    if (c.atlas.nu_star < 0) throw ConfigError("'atlas.nu_star' must be >= 0", "atlas.nu_star");
    if (!(c.atlas.cond_limit > 1.0)) {
      throw ConfigError("'atlas.cond_limit' must exceed 1", "atlas.cond_limit");
    }
  }

  if (const auto* v = cfg::find(root, "solution")) {
    if (v->kind != cfg::Value::Kind::array || v->array.empty()) {
      throw ConfigError("'solution' must be a nonempty array of {l, m, coeff} tables",
                        "solution");
    }
    c.solution.clear();
    for (const auto& item : v->array) {
      if (item.kind != cfg::Value::Kind::table) {
        throw ConfigError("'solution' entries must be tables", "solution");
      }
      cfg::reject_unknown(item, "solution", {"l", "m", "coeff"});
      HarmonicTerm term;
      if (const auto* x = cfg::find(item, "l")) term.l = cfg::as_int(*x, "solution.l");
      if (const auto* x = cfg::find(item, "m")) term.m = cfg::as_int(*x, "solution.m");
      if (const auto* x = cfg::find(item, "coeff")) term.coeff = cfg::as_number(*x, "solution.coeff");
      try {
        Eigenfunction probe(ManifoldDim(c.dim), term.l, term.m);
      } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("invalid solution harmonic: ") + e.what(), "solution");
      }
      c.solution.push_back(term);
    }
  }

  if (const auto* v = cfg::find(root, "solver")) {
    cfg::reject_unknown(*v, "solver", {"method", "tol", "max_iter"});
    if (const auto* x = cfg::find(*v, "method")) {
      const std::string meth = cfg::as_string(*x, "solver.method");
      if (meth == "dense-qr") c.solver.method = SolveMethod::dense_qr;
      else if (meth == "normal-cg") c.solver.method = SolveMethod::normal_cg;
      else throw ConfigError("'solver.method' must be \"dense-qr\" or \"normal-cg\"", "solver.method");
    }
    if (const auto* x = cfg::find(*v, "tol")) c.solver.tol = cfg::as_number(*x, "solver.tol");
    if (const auto* x = cfg::find(*v, "max_iter")) c.solver.max_iter = cfg::as_int(*x, "solver.max_iter");
    if (!(c.solver.tol > 0.0 && c.solver.tol < 1.0)) {
      throw ConfigError("'solver.tol' must lie in (0, 1)", "solver.tol");
    }
    if (c.solver.max_iter < 0) throw ConfigError("'solver.max_iter' must be >= 0", "solver.max_iter");
  }

  if (const auto* v = cfg::find(root, "out_dir")) c.out_dir = cfg::as_string(*v, "out_dir");

  if (const auto* v = cfg::find(root, "n_list")) {
    if (v->kind != cfg::Value::Kind::array) throw ConfigError("'n_list' must be an array", "n_list");
    c.n_list.clear();
    for (const auto& item : v->array) c.n_list.push_back(cfg::as_int(item, "n_list"));
    for (std::size_t i = 1; i < c.n_list.size(); ++i) {
      if (c.n_list[i] <= c.n_list[i - 1]) {
        throw ConfigError("'n_list' must be strictly increasing", "n_list");
      }
    }
    if (!c.n_list.empty() && c.n_list.front() < 2) {
      throw ConfigError("'n_list' entries must be >= 2", "n_list");
    }
  }

  return c;
}

/// Canonical serialization; parse(serialize(c)) reproduces c with the
/// nu_star default resolved.
inline std::string serialize_config(const ExperimentConfig& c) {
  std::string out;
  out += "dim = " + std::to_string(c.dim) + "\n";
  out += "operator = { kappa = " + std::to_string(c.op.kappa) +
         ", alpha = " + cfg::fmt(c.op.alpha) + " }\n";
  out += "kernel = { family = \"";
  out += (c.kernel.family == KernelFamily::matern ? "matern" : "wendland");
  out += "\", param = " + cfg::fmt(c.kernel.param) + ", eps = " + cfg::fmt(c.kernel.eps) + " }\n";
  out += "nodes = { type = \"" + c.nodes.type + "\", n = " + std::to_string(c.nodes.n) +
         ", seed = " + std::to_string(c.nodes.seed);
  if (!c.nodes.path.empty()) out += ", path = \"" + c.nodes.path + "\"";
  out += " }\n";
  out += "atlas = { nu_star = " + std::to_string(c.resolved_nu_star()) +
         ", beta = " + cfg::fmt(c.atlas.beta) + ", order = " + std::to_string(c.atlas.order) +
         ", lebesgue_samples = " + std::to_string(c.atlas.lebesgue_samples) +
         ", cond_limit = " + cfg::fmt(c.atlas.cond_limit) + " }\n";
  out += "solution = [ ";
  for (std::size_t i = 0; i < c.solution.size(); ++i) {
    if (i) out += ", ";
    out += "{ l = " + std::to_string(c.solution[i].l) +
           ", m = " + std::to_string(c.solution[i].m) +
           ", coeff = " + cfg::fmt(c.solution[i].coeff) + " }";
  }
  out += " ]\n";
  out += "solver = { method = \"";
  out += to_string(c.solver.method);
  out += "\", tol = " + cfg::fmt(c.solver.tol) +
         ", max_iter = " + std::to_string(c.solver.max_iter) + " }\n";
  out += "out_dir = \"" + c.out_dir + "\"\n";
  out += "n_list = [ ";
  for (std::size_t i = 0; i < c.n_list.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(c.n_list[i]);
  }
  out += " ]\n";
  return out;
}

inline bool operator==(const OperatorSpec& a, const OperatorSpec& b) {
  return a.kappa == b.kappa && a.alpha == b.alpha;
}
inline bool operator==(const KernelSpec& a, const KernelSpec& b) {
  return a.family == b.family && a.param == b.param && a.eps == b.eps;
}
inline bool operator==(const NodesSpec& a, const NodesSpec& b) {
  return a.type == b.type && a.n == b.n && a.seed == b.seed && a.path == b.path;
}
inline bool operator==(const AtlasSpec& a, const AtlasSpec& b) {
  return a.beta == b.beta && a.order == b.order &&
         a.lebesgue_samples == b.lebesgue_samples && a.cond_limit == b.cond_limit;
}
inline bool operator==(const HarmonicTerm& a, const HarmonicTerm& b) {
  return a.l == b.l && a.m == b.m && a.coeff == b.coeff;
}
inline bool operator==(const SolverSpec& a, const SolverSpec& b) {
  return a.method == b.method && a.tol == b.tol && a.max_iter == b.max_iter;
}
inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.dim == b.dim && a.op == b.op && a.kernel == b.kernel && a.nodes == b.nodes &&
         a.atlas == b.atlas && a.resolved_nu_star() == b.resolved_nu_star() &&
         a.solution == b.solution && a.solver == b.solver && a.out_dir == b.out_dir &&
         a.n_list == b.n_list;
}

}  // namespace spherefd
