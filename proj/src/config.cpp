#include "ssgan/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace ssgan::cfg {

namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

int64_t parse_int(const std::string& s, const std::string& key) {
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("config: key '" + key + "' expects an integer, got '" + s + "'");
  }
}

uint64_t parse_uint(const std::string& s, const std::string& key) {
  try {
    size_t pos = 0;
    const uint64_t v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("config: key '" + key + "' expects an unsigned integer, got '" + s + "'");
  }
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("config: key '" + key + "' expects a number, got '" + s + "'");
  }
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw Error("config: key '" + key + "' expects true/false, got '" + s + "'");
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto add = [&f](std::string section, std::string key, auto setter, auto getter) {
      f.push_back({std::move(section), std::move(key), setter, getter});
    };
    // [run]
    add("run", "seed",
        [](RunConfig& c, const std::string& v) { c.seed = parse_uint(v, "seed"); },
        [](const RunConfig& c) { return std::to_string(c.seed); });
    add("run", "out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
        [](const RunConfig& c) { return c.out_dir; });
    add("run", "precision", [](RunConfig& c, const std::string& v) { c.precision = v; },
        [](const RunConfig& c) { return c.precision; });
    // [data]
    add("data", "dataset", [](RunConfig& c, const std::string& v) { c.dataset = v; },
        [](const RunConfig& c) { return c.dataset; });
    add("data", "resolution",
        [](RunConfig& c, const std::string& v) { c.resolution = parse_int(v, "resolution"); },
        [](const RunConfig& c) { return std::to_string(c.resolution); });
    add("data", "channels",
        [](RunConfig& c, const std::string& v) { c.channels = parse_int(v, "channels"); },
        [](const RunConfig& c) { return std::to_string(c.channels); });
    add("data", "dataset_size",
        [](RunConfig& c, const std::string& v) { c.dataset_size = parse_int(v, "dataset_size"); },
        [](const RunConfig& c) { return std::to_string(c.dataset_size); });
    add("data", "eval_samples",
        [](RunConfig& c, const std::string& v) { c.eval_samples = parse_int(v, "eval_samples"); },
        [](const RunConfig& c) { return std::to_string(c.eval_samples); });
    add("data", "fid_extractor",
        [](RunConfig& c, const std::string& v) { c.fid_extractor = v; },
        [](const RunConfig& c) { return c.fid_extractor; });
    // [model]
    add("model", "arch", [](RunConfig& c, const std::string& v) { c.arch = v; },
        [](const RunConfig& c) { return c.arch; });
    add("model", "latent_dim",
        [](RunConfig& c, const std::string& v) { c.latent_dim = parse_int(v, "latent_dim"); },
        [](const RunConfig& c) { return std::to_string(c.latent_dim); });
    add("model", "base_channels",
        [](RunConfig& c, const std::string& v) {
          c.base_channels = parse_int(v, "base_channels");
        },
        [](const RunConfig& c) { return std::to_string(c.base_channels); });
    add("model", "sastm", [](RunConfig& c, const std::string& v) { c.sastm = v; },
        [](const RunConfig& c) { return c.sastm; });
    add("model", "trunk_width",
        [](RunConfig& c, const std::string& v) { c.trunk_width = parse_int(v, "trunk_width"); },
        [](const RunConfig& c) { return std::to_string(c.trunk_width); });
    add("model", "zero_threshold",
        [](RunConfig& c, const std::string& v) {
          c.zero_threshold = parse_double(v, "zero_threshold");
        },
        [](const RunConfig& c) { return fmt_double(c.zero_threshold); });
    add("model", "share_beta_2x2",
        [](RunConfig& c, const std::string& v) {
          c.share_beta_2x2 = parse_bool(v, "share_beta_2x2");
        },
        [](const RunConfig& c) { return c.share_beta_2x2 ? std::string("true") : "false"; });
    add("model", "critic_base_width",
        [](RunConfig& c, const std::string& v) {
          c.critic_base_width = parse_int(v, "critic_base_width");
        },
        [](const RunConfig& c) { return std::to_string(c.critic_base_width); });
    // [train]
    add("train", "lr_g",
        [](RunConfig& c, const std::string& v) { c.lr_g = parse_double(v, "lr_g"); },
        [](const RunConfig& c) { return fmt_double(c.lr_g); });
    add("train", "lr_d",
        [](RunConfig& c, const std::string& v) { c.lr_d = parse_double(v, "lr_d"); },
        [](const RunConfig& c) { return fmt_double(c.lr_d); });
    add("train", "adam_beta1",
        [](RunConfig& c, const std::string& v) { c.adam_beta1 = parse_double(v, "adam_beta1"); },
        [](const RunConfig& c) { return fmt_double(c.adam_beta1); });
    add("train", "adam_beta2",
        [](RunConfig& c, const std::string& v) { c.adam_beta2 = parse_double(v, "adam_beta2"); },
        [](const RunConfig& c) { return fmt_double(c.adam_beta2); });
    add("train", "adam_eps",
        [](RunConfig& c, const std::string& v) { c.adam_eps = parse_double(v, "adam_eps"); },
        [](const RunConfig& c) { return fmt_double(c.adam_eps); });
    add("train", "d_steps_per_g",
        [](RunConfig& c, const std::string& v) {
          c.d_steps_per_g = parse_int(v, "d_steps_per_g");
        },
        [](const RunConfig& c) { return std::to_string(c.d_steps_per_g); });
    add("train", "gp_lambda",
        [](RunConfig& c, const std::string& v) { c.gp_lambda = parse_double(v, "gp_lambda"); },
        [](const RunConfig& c) { return fmt_double(c.gp_lambda); });
    add("train", "batch_size",
        [](RunConfig& c, const std::string& v) { c.batch_size = parse_int(v, "batch_size"); },
        [](const RunConfig& c) { return std::to_string(c.batch_size); });
    add("train", "steps",
        [](RunConfig& c, const std::string& v) { c.steps = parse_int(v, "steps"); },
        [](const RunConfig& c) { return std::to_string(c.steps); });
    add("train", "eval_every",
        [](RunConfig& c, const std::string& v) { c.eval_every = parse_int(v, "eval_every"); },
        [](const RunConfig& c) { return std::to_string(c.eval_every); });
    add("train", "probe_batch",
        [](RunConfig& c, const std::string& v) { c.probe_batch = parse_int(v, "probe_batch"); },
        [](const RunConfig& c) { return std::to_string(c.probe_batch); });
    return f;
  }();
  return table;
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      bool known = false;
      for (const auto& f : fields()) known = known || f.section == section;
      if (!known) {
        throw Error("config line " + std::to_string(lineno) + ": unknown section [" + section +
                    "]");
      }
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool matched = false;
    for (const auto& f : fields()) {
      if (f.section == section && f.key == key) {
        f.set(cfg, value);
        matched = true;
        break;
      }
    }
    if (!matched) {
      throw Error("config line " + std::to_string(lineno) + ": unknown key '" + key +
                  "' in section [" + section + "]");
    }
  }
  validate_config(cfg);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("config: cannot open " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return parse_config(os.str());
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) os << "\n";
      section = f.section;
      os << "[" << section << "]\n";
    }
    os << f.key << " = " << f.get(cfg) << "\n";
  }
  return os.str();
}

void validate_config(const RunConfig& cfg) {
  auto positive = [](double v, const char* key) {
    if (!(v > 0)) throw Error(std::string("config: ") + key + " must be positive");
  };
  positive(static_cast<double>(cfg.resolution), "resolution");
  positive(static_cast<double>(cfg.batch_size), "batch_size");
  positive(static_cast<double>(cfg.latent_dim), "latent_dim");
  positive(static_cast<double>(cfg.base_channels), "base_channels");
  positive(cfg.lr_g, "lr_g");
  positive(cfg.lr_d, "lr_d");
  positive(static_cast<double>(cfg.eval_every), "eval_every");
  positive(static_cast<double>(cfg.probe_batch), "probe_batch");
  if (cfg.d_steps_per_g < 1) throw Error("config: d_steps_per_g must be >= 1");
  if (cfg.steps < 0) throw Error("config: steps must be >= 0");
  if (cfg.gp_lambda < 0) throw Error("config: gp_lambda must be >= 0");
  if (cfg.zero_threshold < 0) throw Error("config: zero_threshold must be >= 0");
  if (cfg.precision != "f32" && cfg.precision != "f64") {
    throw Error("config: precision must be f32 or f64");
  }
  if (cfg.channels != 1 && cfg.channels != 3) {
    throw Error("config: channels must be 1 or 3");
  }
  if (cfg.eval_samples < 2) throw Error("config: eval_samples must be >= 2");
  if (cfg.fid_extractor != "pixel" && cfg.fid_extractor != "toycnn") {
    throw Error("config: fid_extractor must be pixel or toycnn");
  }
}

}  // namespace ssgan::cfg
