#include "casvae/config.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "casvae/errors.hpp"

namespace casvae {

namespace {

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v.empty()) throw ConfigError("invalid value for '" + key + "': empty");
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError("invalid value for '" + key + "': '" + v + "'");
  return x;
}

long long parse_int(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v.empty()) throw ConfigError("invalid value for '" + key + "': empty");
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError("invalid value for '" + key + "': '" + v + "'");
  return x;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v.empty() || v[0] == '-')
    throw ConfigError("invalid value for '" + key + "': '" + trim(value) + "'");
  errno = 0;
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE)
    throw ConfigError("invalid value for '" + key + "': '" + v + "'");
  return static_cast<std::uint64_t>(x);
}

bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "0" || v == "false") return false;
  if (v == "1" || v == "true") return true;
  throw ConfigError("invalid value for '" + key + "': '" + v +
                    "' (expected 0/1/true/false)");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& key,
                                           const std::string& value) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ','))
    seeds.push_back(parse_u64(key, item));
  if (seeds.empty()) throw ConfigError("'" + key + "' needs at least one seed");
  return seeds;
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(seeds[i]);
  }
  return out;
}

/// One row per config key: canonical order, string setter, string getter.
struct KeyEntry {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeyEntry>& key_table() {
  static const std::vector<KeyEntry> table = {
      {"method", [](RunConfig& c, const std::string& v) { c.method = trim(v); },
       [](const RunConfig& c) { return c.method; }},
      {"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = trim(v); },
       [](const RunConfig& c) { return c.out_dir.string(); }},
      {"seeds",
       [](RunConfig& c, const std::string& v) { c.seeds = parse_seed_list("seeds", v); },
       [](const RunConfig& c) { return join_seeds(c.seeds); }},
      {"train_file",
       [](RunConfig& c, const std::string& v) { c.train_file = trim(v); },
       [](const RunConfig& c) { return c.train_file.string(); }},
      {"eval_file", [](RunConfig& c, const std::string& v) { c.eval_file = trim(v); },
       [](const RunConfig& c) { return c.eval_file.string(); }},
      {"n_train",
       [](RunConfig& c, const std::string& v) {
         c.n_train = static_cast<int>(parse_int("n_train", v));
       },
       [](const RunConfig& c) { return std::to_string(c.n_train); }},
      {"n_eval",
       [](RunConfig& c, const std::string& v) {
         c.n_eval = static_cast<int>(parse_int("n_eval", v));
       },
       [](const RunConfig& c) { return std::to_string(c.n_eval); }},
      {"balance",
       [](RunConfig& c, const std::string& v) { c.balance = parse_double("balance", v); },
       [](const RunConfig& c) { return format_g17(c.balance); }},
      {"contamination",
       [](RunConfig& c, const std::string& v) {
         c.contamination = parse_double("contamination", v);
       },
       [](const RunConfig& c) { return format_g17(c.contamination); }},
      {"noise_sigma",
       [](RunConfig& c, const std::string& v) {
         c.noise_sigma = parse_double("noise_sigma", v);
       },
       [](const RunConfig& c) { return format_g17(c.noise_sigma); }},
      {"channels",
       [](RunConfig& c, const std::string& v) {
         c.channels = static_cast<int>(parse_int("channels", v));
       },
       [](const RunConfig& c) { return std::to_string(c.channels); }},
      {"height",
       [](RunConfig& c, const std::string& v) {
         c.height = static_cast<int>(parse_int("height", v));
       },
       [](const RunConfig& c) { return std::to_string(c.height); }},
      {"width",
       [](RunConfig& c, const std::string& v) {
         c.width = static_cast<int>(parse_int("width", v));
       },
       [](const RunConfig& c) { return std::to_string(c.width); }},
      {"data_seed",
       [](RunConfig& c, const std::string& v) { c.data_seed = parse_u64("data_seed", v); },
       [](const RunConfig& c) { return std::to_string(c.data_seed); }},
      {"seed",
       [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64("seed", v); },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      {"lr",
       [](RunConfig& c, const std::string& v) { c.train.lr = parse_double("lr", v); },
       [](const RunConfig& c) { return format_g17(c.train.lr); }},
      {"batch_size",
       [](RunConfig& c, const std::string& v) {
         c.train.batch_size = static_cast<int>(parse_int("batch_size", v));
       },
       [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
      {"epochs",
       [](RunConfig& c, const std::string& v) {
         c.train.epochs = static_cast<int>(parse_int("epochs", v));
       },
       [](const RunConfig& c) { return std::to_string(c.train.epochs); }},
      {"surrogate",
       [](RunConfig& c, const std::string& v) {
         c.train.surrogate = surrogate_kind_from_string(trim(v));
       },
       [](const RunConfig& c) { return to_string(c.train.surrogate); }},
      {"prior_m",
       [](RunConfig& c, const std::string& v) { c.train.prior_m = parse_double("prior_m", v); },
       [](const RunConfig& c) { return format_g17(c.train.prior_m); }},
      {"prior_s",
       [](RunConfig& c, const std::string& v) { c.train.prior_s = parse_double("prior_s", v); },
       [](const RunConfig& c) { return format_g17(c.train.prior_s); }},
      {"prior_alpha",
       [](RunConfig& c, const std::string& v) {
         c.train.prior_alpha = parse_double("prior_alpha", v);
       },
       [](const RunConfig& c) { return format_g17(c.train.prior_alpha); }},
      {"lambda1",
       [](RunConfig& c, const std::string& v) { c.train.lambda1 = parse_double("lambda1", v); },
       [](const RunConfig& c) { return format_g17(c.train.lambda1); }},
      {"lambda2",
       [](RunConfig& c, const std::string& v) { c.train.lambda2 = parse_double("lambda2", v); },
       [](const RunConfig& c) { return format_g17(c.train.lambda2); }},
      {"eval_noise",
       [](RunConfig& c, const std::string& v) {
         c.train.eval_noise = parse_bool("eval_noise", v);
       },
       [](const RunConfig& c) { return std::string(c.train.eval_noise ? "1" : "0"); }},
      {"pixel_space_recon",
       [](RunConfig& c, const std::string& v) {
         c.train.pixel_space_recon = parse_bool("pixel_space_recon", v);
       },
       [](const RunConfig& c) {
         return std::string(c.train.pixel_space_recon ? "1" : "0");
       }},
      {"isomap_k",
       [](RunConfig& c, const std::string& v) {
         c.isomap_k = static_cast<int>(parse_int("isomap_k", v));
       },
       [](const RunConfig& c) { return std::to_string(c.isomap_k); }},
      {"isomap_max_points",
       [](RunConfig& c, const std::string& v) {
         c.isomap_max_points = static_cast<int>(parse_int("isomap_max_points", v));
       },
       [](const RunConfig& c) { return std::to_string(c.isomap_max_points); }},
  };
  return table;
}

const KeyEntry* find_key(const std::string& name) {
  for (const KeyEntry& entry : key_table())
    if (name == entry.name) return &entry;
  return nullptr;
}

/// Strips a trailing "#" comment and surrounding whitespace; empty result
/// means the line carries nothing.
std::string strip_line(const std::string& raw) {
  const std::size_t hash = raw.find('#');
  return trim(hash == std::string::npos ? raw : raw.substr(0, hash));
}

/// Splits "key = value" (whitespace optional); reports the 1-based line.
std::pair<std::string, std::string> split_key_value(const std::string& line,
                                                    int line_no) {
  const std::size_t eq = line.find('=');
  if (eq == std::string::npos)
    throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" +
                      line + "'");
  std::string key = trim(line.substr(0, eq));
  std::string value = trim(line.substr(eq + 1));
  if (key.empty())
    throw ConfigError("line " + std::to_string(line_no) + ": empty key");
  return {std::move(key), std::move(value)};
}

}  // namespace

Method method_from_string(const std::string& name) {
  if (name == "casvae") return Method::CasVae;
  if (name == "vae_pca") return Method::VaePca;
  if (name == "vae_isomap") return Method::VaeIsomap;
  if (name == "dklvae_pca") return Method::DklVaePca;
  if (name == "dklvae_isomap") return Method::DklVaeIsomap;
  throw ConfigError(
      "unknown method '" + name +
      "' (expected casvae, vae_pca, vae_isomap, dklvae_pca, or dklvae_isomap)");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::CasVae: return "casvae";
    case Method::VaePca: return "vae_pca";
    case Method::VaeIsomap: return "vae_isomap";
    case Method::DklVaePca: return "dklvae_pca";
    case Method::DklVaeIsomap: return "dklvae_isomap";
  }
  throw ConfigError("unknown method enum value");
}

void validate_run_config(const RunConfig& cfg) {
  (void)method_from_string(cfg.method);
  if (cfg.out_dir.empty()) throw ConfigError("out_dir must not be empty");
  if (cfg.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (cfg.train_file.empty() != cfg.eval_file.empty())
    throw ConfigError("train_file and eval_file must be given together");
  if (cfg.n_train < 2) throw ConfigError("n_train must be at least 2");
  if (cfg.n_eval < 2) throw ConfigError("n_eval must be at least 2");
  if (!(cfg.balance >= 0.0 && cfg.balance <= 1.0))
    throw ConfigError("balance must be in [0, 1]");
  if (!(cfg.contamination >= 0.0 && cfg.contamination <= 1.0))
    throw ConfigError("contamination must be in [0, 1]");
  if (!(cfg.noise_sigma >= 0.0) || !std::isfinite(cfg.noise_sigma))
    throw ConfigError("noise_sigma must be finite and non-negative");
  if (cfg.channels < 1) throw ConfigError("channels must be at least 1");
  if (cfg.height < 4 || cfg.width < 4)
    throw ConfigError("height and width must be at least 4");
  if (cfg.isomap_k < 1) throw ConfigError("isomap_k must be at least 1");
  if (cfg.isomap_max_points < 2)
    throw ConfigError("isomap_max_points must be at least 2");
  validate_train_config(cfg.train);
}

RunConfig parse_run_config_text(const std::string& text) {
  RunConfig cfg;
  std::vector<std::string> seen;
  std::istringstream stream(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    const std::string line = strip_line(raw);
    if (line.empty()) continue;
    auto [key, value] = split_key_value(line, line_no);
    const KeyEntry* entry = find_key(key);
    if (!entry)
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    for (const std::string& s : seen)
      if (s == key)
        throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key +
                          "'");
    seen.push_back(key);
    entry->set(cfg, value);
  }
  validate_run_config(cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config_text(buf.str());
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::string out;
  for (const KeyEntry& entry : key_table()) {
    out += entry.name;
    out += " = ";
    out += entry.get(cfg);
    out += "\n";
  }
  return out;
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write config file: " + path.string());
  out << serialize_run_config(cfg);
  if (!out) throw IoError("failed writing config file: " + path.string());
}

GridSpec parse_grid_text(const std::string& text) {
  GridSpec grid;
  std::istringstream stream(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    const std::string line = strip_line(raw);
    if (line.empty()) continue;
    auto [key, value] = split_key_value(line, line_no);
    if (key == "out_dir" || key == "seeds")
      throw ConfigError("line " + std::to_string(line_no) + ": '" + key +
                        "' cannot be a grid axis");
    if (!find_key(key))
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    for (const auto& axis : grid.axes)
      if (axis.first == key)
        throw ConfigError("line " + std::to_string(line_no) + ": duplicate axis '" + key +
                          "'");
    std::vector<std::string> values;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty())
        throw ConfigError("line " + std::to_string(line_no) + ": empty value in axis '" +
                          key + "'");
      values.push_back(item);
    }
    if (values.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": axis '" + key +
                        "' has no values");
    grid.axes.emplace_back(key, std::move(values));
  }
  return grid;
}

GridSpec load_grid(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open grid file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_grid_text(buf.str());
}

std::size_t grid_size(const GridSpec& grid) {
  std::size_t n = 1;
  for (const auto& axis : grid.axes) n *= axis.second.size();
  return n;
}

std::vector<std::string> grid_point_values(const GridSpec& grid, std::size_t index) {
  if (index >= grid_size(grid))
    throw ConfigError("grid point " + std::to_string(index) + " out of range (size " +
                      std::to_string(grid_size(grid)) + ")");
  std::vector<std::string> values(grid.axes.size());
  for (std::size_t a = grid.axes.size(); a-- > 0;) {
    const auto& list = grid.axes[a].second;
    values[a] = list[index % list.size()];
    index /= list.size();
  }
  return values;
}

RunConfig grid_point(const RunConfig& base, const GridSpec& grid, std::size_t index) {
  const std::vector<std::string> values = grid_point_values(grid, index);
  RunConfig cfg = base;
  for (std::size_t a = 0; a < grid.axes.size(); ++a)
    find_key(grid.axes[a].first)->set(cfg, values[a]);
  validate_run_config(cfg);
  return cfg;
}

}  // namespace casvae
