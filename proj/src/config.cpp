#include "gradleak/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "gradleak/errors.hpp"

namespace gradleak::harness {

std::vector<stop::StopController> ControllerSweep::expand() const {
    std::vector<stop::StopController> out;
    for (auto kind : kinds) {
        switch (kind) {
            case stop::ControllerKind::never: out.push_back(stop::StopController::never()); break;
            case stop::ControllerKind::threshold:
                for (double t : thresholds) out.push_back(stop::StopController::threshold(t));
                break;
            case stop::ControllerKind::plateau:
                for (auto p : patiences) out.push_back(stop::StopController::plateau(p));
                break;
            case stop::ControllerKind::hybrid:
                for (double t : thresholds) {
                    for (auto p : patiences) out.push_back(stop::StopController::hybrid(t, p));
                }
                break;
        }
    }
    return out;
}

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split(const std::string& value, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double to_double(const std::string& key, const std::string& v, std::size_t line) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
        throw ConfigError("'" + key + "' expects a number, got '" + v + "'", line);
    }
    return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v, std::size_t line) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || v[0] == '-' || ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("'" + key + "' expects a non-negative integer, got '" + v + "'", line);
    }
    return out;
}

std::size_t to_positive(const std::string& key, const std::string& v, std::size_t line) {
    const auto out = to_uint(key, v, line);
    if (out == 0) throw ConfigError("'" + key + "' must be >= 1", line);
    return static_cast<std::size_t>(out);
}

bool to_bool(const std::string& key, const std::string& v, std::size_t line) {
    if (v == "true" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "no" || v == "0") return false;
    throw ConfigError("'" + key + "' expects true or false, got '" + v + "'", line);
}

Shape to_shape(const std::string& key, const std::string& v, std::size_t line) {
    Shape shape;
    for (const auto& part : split(v, 'x')) shape.push_back(to_positive(key, part, line));
    if (shape.size() != 3) throw ConfigError("'" + key + "' expects CxHxW, got '" + v + "'", line);
    return shape;
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& key, const std::string& v, std::size_t line, F&& convert) {
    std::vector<T> out;
    for (const auto& item : split(v, ',')) out.push_back(convert(key, item, line));
    if (out.empty()) throw ConfigError("'" + key + "' expects a non-empty list", line);
    return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value, std::size_t)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
    static const std::map<std::string, std::map<std::string, Setter>> table = {
        {"dataset",
         {
             {"name", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  if (v != "synthetic" && v != "mnist" && v != "cifar10") {
                      throw ConfigError("'" + k + "' must be synthetic, mnist or cifar10, got '" + v + "'", line);
                  }
                  c.dataset.name = v;
              }},
             {"images", [](ExperimentConfig& c, const std::string&, const std::string& v, std::size_t) {
                  c.dataset.images = v;
              }},
             {"labels", [](ExperimentConfig& c, const std::string&, const std::string& v, std::size_t) {
                  c.dataset.labels = v;
              }},
             {"batches", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.dataset.batches.clear();
                  for (const auto& p : split(v, ',')) c.dataset.batches.emplace_back(p);
                  if (c.dataset.batches.empty()) throw ConfigError("'" + k + "' expects at least one path", line);
              }},
             {"shape", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.dataset.shape = to_shape(k, v, line);
              }},
             {"classes", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.dataset.classes = to_positive(k, v, line);
              }},
             {"count", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.dataset.count = to_positive(k, v, line);
              }},
             {"seed", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.dataset.seed = to_uint(k, v, line);
              }},
         }},
        {"model",
         {
             {"arch", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  try {
                      c.model.architecture = parse_architecture(v);
                  } catch (const InvalidArgument& e) {
                      throw ConfigError("'" + k + "': " + e.what(), line);
                  }
                  c.model_explicit = true;
              }},
             {"hidden", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.model.hidden = to_list<std::size_t>(k, v, line, to_positive);
              }},
             {"channels", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.model.channels = to_list<std::size_t>(k, v, line, to_positive);
              }},
             {"kernel", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.model.kernel = to_positive(k, v, line);
              }},
             {"stride", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.model.stride = to_positive(k, v, line);
              }},
             {"padding", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.model.padding = static_cast<std::size_t>(to_uint(k, v, line));
              }},
             {"seed", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.model_seed = to_uint(k, v, line);
              }},
             {"init_low", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.init_low = to_double(k, v, line);
              }},
             {"init_high", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.init_high = to_double(k, v, line);
              }},
         }},
        {"attack",
         {
             {"optimizer", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  try {
                      c.attack.optimizer = attack::parse_optimizer(v);
                  } catch (const InvalidArgument& e) {
                      throw ConfigError("'" + k + "': " + e.what(), line);
                  }
              }},
             {"max_iterations", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.attack.max_iterations = to_positive(k, v, line);
              }},
             {"learning_rate", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.attack.learning_rate = to_double(k, v, line);
                  if (!(c.attack.learning_rate > 0.0)) throw ConfigError("'" + k + "' must be > 0", line);
              }},
             {"history", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.attack.lbfgs.history = to_positive(k, v, line);
              }},
             {"max_line_search_evals",
              [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.attack.lbfgs.max_line_search_evals = to_positive(k, v, line);
              }},
             {"inner_iterations",
              [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.attack.lbfgs.inner_iterations = to_positive(k, v, line);
              }},
         }},
        {"controllers",
         {
             {"kinds", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.controllers.kinds = to_list<stop::ControllerKind>(
                      k, v, line, [](const std::string& key, const std::string& item, std::size_t at) {
                          try {
                              return stop::parse_controller_kind(item);
                          } catch (const InvalidArgument& e) {
                              throw ConfigError("'" + key + "': " + e.what(), at);
                          }
                      });
              }},
             {"thresholds", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.controllers.thresholds = to_list<double>(k, v, line, to_double);
              }},
             {"patiences", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.controllers.patiences = to_list<std::size_t>(k, v, line, to_positive);
              }},
         }},
        {"experiment",
         {
             {"samples", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.samples = to_positive(k, v, line);
              }},
             {"selection_seed", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.selection_seed = to_uint(k, v, line);
              }},
             {"base_seed", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.base_seed = to_uint(k, v, line);
              }},
             {"jobs", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.jobs = to_positive(k, v, line);
              }},
             {"output_dir", [](ExperimentConfig& c, const std::string&, const std::string& v, std::size_t) {
                  c.output_dir = v;
              }},
             {"write_images", [](ExperimentConfig& c, const std::string& k, const std::string& v, std::size_t line) {
                  c.write_images = to_bool(k, v, line);
              }},
         }},
    };
    return table;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

}  // namespace

void validate(const ExperimentConfig& c) {
    if (c.dataset.name.empty()) throw ConfigError("missing required key [dataset] name", 0);
    if (c.dataset.name == "mnist" && (c.dataset.images.empty() || c.dataset.labels.empty())) {
        throw ConfigError("dataset mnist requires [dataset] images and labels", 0);
    }
    if (c.dataset.name == "cifar10" && c.dataset.batches.empty()) {
        throw ConfigError("dataset cifar10 requires [dataset] batches", 0);
    }
    if (c.dataset.name == "synthetic" && c.dataset.classes < 2) {
        throw ConfigError("synthetic dataset needs at least 2 classes", 0);
    }
    if (!(c.init_low < c.init_high)) throw ConfigError("[model] init_low must be < init_high", 0);
    if (c.samples < 1) throw ConfigError("[experiment] samples must be >= 1", 0);
    if (c.jobs < 1) throw ConfigError("[experiment] jobs must be >= 1", 0);
    try {
        c.attack.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("[attack] ") + e.what(), 0);
    }
    for (double t : c.controllers.thresholds) {
        if (!(t > 0.0)) throw ConfigError("[controllers] thresholds must be > 0", 0);
    }
    if (c.controllers.expand().empty()) throw ConfigError("no controller configurations", 0);
}

ExperimentConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
    ExperimentConfig config;
    config.source = std::string(text);
    const auto& table = schema();

    std::string section;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("malformed section header '" + line + "'", line_no);
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            if (table.find(section) == table.end()) throw ConfigError("unknown section [" + section + "]", line_no);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + line + "'", line_no);
        const std::string key = trim(std::string_view(line).substr(0, eq));
        std::string value = trim(std::string_view(line).substr(eq + 1));
        if (const auto hash = value.find(" #"); hash != std::string::npos) value = trim(value.substr(0, hash));
        // "dataset = <name>" ahead of any section is shorthand for [dataset] name.
        const bool shorthand = section.empty() && key == "dataset";
        if (section.empty() && !shorthand) {
            throw ConfigError("key '" + key + "' appears before any [section]", line_no);
        }
        const auto& keys = table.at(shorthand ? "dataset" : section);
        const std::string stored = shorthand ? "name" : key;
        const auto setter = keys.find(stored);
        if (setter == keys.end()) throw ConfigError("unknown key '" + key + "' in [" + section + "]", line_no);
        if (!seen.insert((shorthand ? "dataset" : section) + "." + stored).second) {
            throw ConfigError("duplicate key '" + key + "' in [" + section + "]", line_no);
        }
        if (value.empty()) throw ConfigError("key '" + key + "' has no value", line_no);
        setter->second(config, shorthand ? key : stored, value, line_no);
    }

    config.dataset.images = resolve(base_dir, config.dataset.images);
    config.dataset.labels = resolve(base_dir, config.dataset.labels);
    for (auto& b : config.dataset.batches) b = resolve(base_dir, b);
    if (!config.model_explicit) {
        config.model.architecture = config.dataset.name == "synthetic" ? Architecture::mlp : Architecture::lenet;
    }
    validate(config);
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string(), 0);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str(), path.parent_path());
}

}  // namespace gradleak::harness
