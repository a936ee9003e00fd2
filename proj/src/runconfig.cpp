#include "odefit/runconfig.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace odefit {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void bad(const std::string& origin, const std::string& what) {
  throw Error(ErrorKind::validation, origin + ": " + what);
}

double parse_double(const std::string& origin, const std::string& key,
                    const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    bad(origin, "key '" + key + "' needs a number, got '" + v + "'");
  }
}

int parse_int(const std::string& origin, const std::string& key,
              const std::string& v) {
  try {
    std::size_t pos = 0;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    bad(origin, "key '" + key + "' needs an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& origin, const std::string& key,
                        const std::string& v) {
  try {
    std::size_t pos = 0;
    unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<std::uint64_t>(x);
  } catch (const std::exception&) {
    bad(origin, "key '" + key + "' needs an unsigned integer, got '" + v +
                    "'");
  }
}

std::vector<std::string> split_commas(const std::string& v) {
  std::vector<std::string> parts;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  return parts;
}

Eigen::VectorXd parse_vector(const std::string& origin, const std::string& key,
                             const std::string& v) {
  auto parts = split_commas(v);
  if (parts.empty()) bad(origin, "key '" + key + "' is empty");
  Eigen::VectorXd out(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = parse_double(origin, key, parts[i]);
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& origin,
                                const std::string& key,
                                const std::string& v) {
  auto parts = split_commas(v);
  if (parts.empty()) bad(origin, "key '" + key + "' is empty");
  std::vector<int> out;
  out.reserve(parts.size());
  for (const auto& part : parts) out.push_back(parse_int(origin, key, part));
  return out;
}

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> table = {
      {"model", {"name"}},
      {"truth", {"nu", "xi"}},
      {"design", {"kind", "T", "n", "I", "J"}},
      {"noise", {"dist", "sigma"}},
      {"pipeline", {"kind", "order", "bandwidth", "refine"}},
      {"run",
       {"seed", "replicates", "bootstrap", "threads", "ladder",
        "rung_replicates"}},
  };
  return table;
}

}  // namespace

RunConfig parse_run_config(const std::string& text,
                           const std::string& origin) {
  RunConfig rc;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::set<std::string> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') bad(where, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (allowed_keys().find(section) == allowed_keys().end()) {
        bad(where, "unknown section '" + section + "'");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) bad(where, "expected 'key = value'");
    if (section.empty()) bad(where, "key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& allowed = allowed_keys().at(section);
    if (allowed.find(key) == allowed.end()) {
      bad(where, "unknown key '" + key + "' in section [" + section + "]");
    }
    if (!seen.insert(section + "." + key).second) {
      bad(where, "duplicate key '" + key + "' in section [" + section + "]");
    }
    if (value.empty()) bad(where, "key '" + key + "' has no value");

    if (section == "model") {
      rc.model_name = value;
    } else if (section == "truth") {
      if (key == "nu") rc.nu = parse_vector(where, key, value);
      else rc.xi = parse_vector(where, key, value);
    } else if (section == "design") {
      if (key == "kind") rc.design_kind = value;
      else if (key == "T") rc.T = parse_double(where, key, value);
      else if (key == "n") rc.n = parse_int(where, key, value);
      else if (key == "I") rc.I = parse_int(where, key, value);
      else rc.J = parse_int(where, key, value);
    } else if (section == "noise") {
      if (key == "dist") rc.noise_dist = value;
      else rc.sigma = parse_vector(where, key, value);
    } else if (section == "pipeline") {
      if (key == "kind") rc.pipeline_kind = value;
      else if (key == "order") rc.order = parse_int(where, key, value);
      else if (key == "bandwidth") rc.bandwidth = parse_double(where, key, value);
      else rc.refine = parse_int(where, key, value);
    } else {  // run
      if (key == "seed") rc.seed = parse_u64(where, key, value);
      else if (key == "replicates") rc.replicates = parse_int(where, key, value);
      else if (key == "bootstrap") rc.bootstrap = parse_int(where, key, value);
      else if (key == "threads") rc.threads = parse_int(where, key, value);
      else if (key == "ladder") rc.ladder = parse_int_list(where, key, value);
      else rc.rung_replicates = parse_int(where, key, value);
    }
  }
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::io, "cannot open config file '" + path + "'");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str(), path);
}

OdeModel make_model(const std::string& name) {
  if (name == "fhn") return builtin_fitzhugh_nagumo();
  if (name == "fhn_ramsay") return builtin_fitzhugh_nagumo_ramsay();
  if (name == "lv") return builtin_lotka_volterra();
  throw Error(ErrorKind::validation,
              "unknown model '" + name + "' (expected fhn, fhn_ramsay, lv)");
}

OdeModel require_model(const RunConfig& rc) {
  if (!rc.model_name) {
    throw Error(ErrorKind::validation, "config needs [model] name");
  }
  return make_model(*rc.model_name);
}

void require_truth(const RunConfig& rc, const OdeModel& model,
                   Eigen::VectorXd* nu_out, Eigen::VectorXd* theta_out,
                   Eigen::VectorXd* xi_out) {
  if (!rc.nu || !rc.xi) {
    throw Error(ErrorKind::validation, "config needs [truth] nu and xi");
  }
  const int want = model.h_is_identity() ? model.p : model.q;
  if (rc.nu->size() != want) {
    throw Error(ErrorKind::validation,
                "[truth] nu needs " + std::to_string(want) + " entries for '" +
                    model.name + "'");
  }
  if (rc.xi->size() != model.d) {
    throw Error(ErrorKind::validation,
                "[truth] xi needs " + std::to_string(model.d) + " entries");
  }
  *nu_out = *rc.nu;
  *theta_out = model.h(*rc.nu);
  *xi_out = *rc.xi;
}

std::variant<GridDesign, RepeatedDesign> require_design(const RunConfig& rc) {
  if (!rc.design_kind) {
    throw Error(ErrorKind::validation, "config needs [design] kind");
  }
  if (!rc.T) {
    throw Error(ErrorKind::validation, "config needs [design] T");
  }
  if (*rc.design_kind == "grid") {
    if (rc.I || rc.J) {
      throw Error(ErrorKind::validation,
                  "keys I/J are not valid for a grid design");
    }
    if (!rc.n) {
      throw Error(ErrorKind::validation, "grid design needs [design] n");
    }
    return GridDesign{*rc.T, *rc.n};
  }
  if (*rc.design_kind == "repeated") {
    if (rc.n) {
      throw Error(ErrorKind::validation,
                  "key n is not valid for a repeated design");
    }
    if (!rc.I || !rc.J) {
      throw Error(ErrorKind::validation,
                  "repeated design needs [design] I and J");
    }
    return RepeatedDesign{*rc.T, *rc.I, *rc.J};
  }
  throw Error(ErrorKind::validation,
              "unknown design kind '" + *rc.design_kind +
                  "' (expected grid or repeated)");
}

NoiseSpec require_noise(const RunConfig& rc, int d) {
  if (!rc.noise_dist || !rc.sigma) {
    throw Error(ErrorKind::validation, "config needs [noise] dist and sigma");
  }
  NoiseSpec noise;
  if (*rc.noise_dist == "gaussian") {
    noise.dist = NoiseSpec::Dist::gaussian;
  } else if (*rc.noise_dist == "laplace") {
    noise.dist = NoiseSpec::Dist::laplace;
  } else {
    throw Error(ErrorKind::validation,
                "unknown noise dist '" + *rc.noise_dist +
                    "' (expected gaussian or laplace)");
  }
  if (rc.sigma->size() == 1) {
    noise.sigma = Eigen::VectorXd::Constant(d, (*rc.sigma)[0]);
  } else if (rc.sigma->size() == d) {
    noise.sigma = *rc.sigma;
  } else {
    throw Error(ErrorKind::validation,
                "[noise] sigma needs 1 or " + std::to_string(d) + " entries");
  }
  return noise;
}

PipelineKind require_pipeline_kind(const RunConfig& rc) {
  if (!rc.pipeline_kind) {
    throw Error(ErrorKind::validation, "config needs [pipeline] kind");
  }
  if (*rc.pipeline_kind == "smooth") return PipelineKind::smooth;
  if (*rc.pipeline_kind == "step") return PipelineKind::step;
  throw Error(ErrorKind::validation,
              "unknown pipeline kind '" + *rc.pipeline_kind +
                  "' (expected smooth or step)");
}

SmootherConfig smoother_from(const RunConfig& rc) {
  SmootherConfig cfg;
  cfg.order = rc.order.value_or(1);
  cfg.bandwidth = rc.bandwidth.value_or(0.0);
  return cfg;
}

McConfig mc_config_from(const RunConfig& rc) {
  McConfig cfg;
  cfg.model = require_model(rc);
  Eigen::VectorXd theta;
  require_truth(rc, cfg.model, &cfg.nu_true, &theta, &cfg.xi_true);
  cfg.design = require_design(rc);
  cfg.noise = require_noise(rc, cfg.model.d);
  cfg.pipeline = require_pipeline_kind(rc);
  cfg.smoother = smoother_from(rc);
  cfg.refine_factor = rc.refine.value_or(4);
  cfg.seed = rc.seed.value_or(0);
  cfg.replicates = rc.replicates.value_or(100);
  cfg.bootstrap = rc.bootstrap.value_or(0);
  cfg.threads = rc.threads.value_or(1);
  return cfg;
}

}  // namespace odefit
