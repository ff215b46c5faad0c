#include "crossworld/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "crossworld/errors.hpp"

namespace crossworld {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& text, const std::string& path) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ConfigError(path + ": expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t to_uint(const std::string& text, const std::string& path) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError(path + ": expected a nonnegative integer, got '" + text + "'");
  }
  return v;
}

bool to_bool(const std::string& text, const std::string& path) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(path + ": expected true or false, got '" + text + "'");
}

template <class F>
void with_path(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw ConfigError(path + ": " + msg);
  } catch (const DomainError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

using Handler = void (*)(RunConfig&, const std::string&, const std::string&);

struct Key {
  const char* section;
  const char* name;
  Handler apply;
};

const Key kKeys[] = {
    {"experiment", "alpha", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.alpha = to_double(v, p); }},
    {"experiment", "replications", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.replications = to_uint(v, p); }},
    {"experiment", "seed", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.seed = to_uint(v, p); }},
    {"experiment", "n_test", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.n_test = to_uint(v, p); }},
    {"experiment", "split_ratio", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.split_ratio = to_double(v, p); }},
    {"experiment", "sigma0", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.sigma0 = to_double(v, p); }},
    {"experiment", "sigma1", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.sigma1 = to_double(v, p); }},
    {"experiment", "output", [](RunConfig& c, const std::string& v, const std::string&) { c.experiment.output = v; }},
    {"experiment", "timing", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.timing = to_bool(v, p); }},
    {"experiment", "threads", [](RunConfig& c, const std::string& v, const std::string& p) {
       const auto t = to_uint(v, p);
       if (t < 1) throw ConfigError(p + ": must be >= 1");
       c.threads = static_cast<int>(t);
     }},
    {"grid", "rho", [](RunConfig& c, const std::string& v, const std::string& p) {
       c.experiment.rhos.clear();
       for (const auto& s : split_list(v, ',')) c.experiment.rhos.push_back(Rho(to_double(s, p)).value());
     }},
    {"grid", "d", [](RunConfig& c, const std::string& v, const std::string& p) {
       c.experiment.dims.clear();
       for (const auto& s : split_list(v, ',')) c.experiment.dims.push_back(to_uint(s, p));
     }},
    {"grid", "n", [](RunConfig& c, const std::string& v, const std::string& p) {
       c.experiment.ns.clear();
       for (const auto& s : split_list(v, ',')) c.experiment.ns.push_back(to_uint(s, p));
     }},
    {"grid", "noise", [](RunConfig& c, const std::string& v, const std::string&) {
       c.experiment.noises.clear();
       for (const auto& s : split_list(v, ',')) {
         const NoiseSpec n = parse_noise(s, Rho(0.0));
         c.experiment.noises.emplace_back(n.marginal, n.copula);
       }
     }},
    {"learner", "trees", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.learner.trees = to_uint(v, p); }},
    {"learner", "min_leaf", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.learner.min_leaf = to_uint(v, p); }},
    {"learner", "mtry", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.learner.mtry = to_uint(v, p); }},
    {"learner", "max_depth", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.learner.max_depth = to_uint(v, p); }},
    {"learner", "subsample", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.learner.subsample = to_double(v, p); }},
    {"bootstrap", "B", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.B = to_uint(v, p); }},
    {"bootstrap", "beta", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.beta = to_double(v, p); }},
    {"bootstrap", "trees", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.bootstrap_trees = to_uint(v, p); }},
    {"cmc", "samples", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.cmc_samples = to_uint(v, p); }},
    {"cmc", "levels", [](RunConfig& c, const std::string& v, const std::string& p) { c.experiment.cmc_levels = to_uint(v, p); }},
};

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
  return out;
}

template <class T>
std::string join_uints(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + std::to_string(v[i]);
  return out;
}

}  // namespace

MethodSpec parse_method_spec(const std::string& label, const std::string& value) {
  const auto parts = split_list(value, ' ');
  if (parts.empty()) throw ConfigError("methods." + label + ": method kind is missing");
  MethodSpec spec;
  spec.label = label;
  spec.kind = parse_method_kind(parts[0]);
  if (spec.kind == MethodKind::cmc) spec.rho = {RhoRule::Kind::fixed, 0.0};
  for (std::size_t k = 1; k < parts.size(); ++k) {
    const auto eq = parts[k].find('=');
    const std::string key = parts[k].substr(0, eq);
    const std::string val = eq == std::string::npos ? "" : parts[k].substr(eq + 1);
    if (key == "rho" && !val.empty()) {
      spec.rho = parse_rho_rule(val);
    } else if (key == "c" && !val.empty()) {
      spec.c = parse_c_rule(val);
    } else {
      throw ConfigError("methods." + label + ": unknown option '" + parts[k] + "'");
    }
  }
  return spec;
}

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig config;
  std::set<std::string> sections = {"experiment", "grid", "learner", "bootstrap", "cmc", "methods"};
  for (const auto& [section, body] : tree) {
    if (!sections.count(section)) {
      if (body.empty()) throw ConfigError(section + ": keys must belong to a section");
      throw ConfigError(section + ": unknown section");
    }
    if (section == "methods") {
      config.experiment.methods.clear();
      for (const auto& [label, node] : body) {
        with_path("methods." + label, [&] {
          config.experiment.methods.push_back(parse_method_spec(label, trim(node.data())));
        });
      }
      continue;
    }
    for (const auto& [name, node] : body) {
      const std::string path = section + "." + name;
      const Key* match = nullptr;
      for (const auto& k : kKeys) {
        if (section == k.section && name == k.name) match = &k;
      }
      if (!match) throw ConfigError(path + ": unknown key");
      with_path(path, [&] { match->apply(config, trim(node.data()), path); });
    }
  }
  config.experiment.validate();
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_config_text(const RunConfig& config) {
  const ExperimentConfig& e = config.experiment;
  std::ostringstream out;
  out << "[experiment]\n"
      << "alpha = " << format_double(e.alpha) << '\n'
      << "replications = " << e.replications << '\n'
      << "seed = " << e.seed << '\n'
      << "n_test = " << e.n_test << '\n'
      << "split_ratio = " << format_double(e.split_ratio) << '\n'
      << "sigma0 = " << format_double(e.sigma0) << '\n'
      << "sigma1 = " << format_double(e.sigma1) << '\n'
      << "output = " << e.output << '\n'
      << "timing = " << (e.timing ? "true" : "false") << '\n';
  if (config.threads) out << "threads = " << *config.threads << '\n';
  out << "\n[grid]\n"
      << "rho = " << join_doubles(e.rhos) << '\n'
      << "d = " << join_uints(e.dims) << '\n'
      << "n = " << join_uints(e.ns) << '\n'
      << "noise = ";
  for (std::size_t i = 0; i < e.noises.size(); ++i) {
    out << (i ? ", " : "") << to_string(e.noises[i].first) << '/' << to_string(e.noises[i].second);
  }
  out << "\n\n[learner]\n"
      << "trees = " << e.learner.trees << '\n'
      << "min_leaf = " << e.learner.min_leaf << '\n'
      << "mtry = " << e.learner.mtry << '\n'
      << "max_depth = " << e.learner.max_depth << '\n'
      << "subsample = " << format_double(e.learner.subsample) << '\n'
      << "\n[bootstrap]\n"
      << "B = " << e.B << '\n'
      << "beta = " << format_double(e.beta) << '\n'
      << "trees = " << e.bootstrap_trees << '\n'
      << "\n[cmc]\n"
      << "samples = " << e.cmc_samples << '\n'
      << "levels = " << e.cmc_levels << '\n'
      << "\n[methods]\n";
  for (const auto& m : e.methods) {
    out << m.label << " = " << to_string(m.kind);
    if (m.uses_rho()) out << " rho=" << m.rho.label();
    if (m.kind == MethodKind::cw_ci) {
      out << " c=" << (m.c.kind == CRule::Kind::fixed ? format_double(m.c.value) : m.c.label());
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace crossworld
