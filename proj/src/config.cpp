#include "mvladdm/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace mvladdm {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_string(const std::string& text, const std::string& origin) {
    ConfigFile cfg;
    cfg.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    std::string section;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
            continue;
        }
        std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        auto& entry = cfg.sections_[section][key];
        entry.value = value;
        entry.line = line_no;
    }
    return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get(const std::string& section, const std::string& key) {
    auto s = sections_.find(section);
    if (s == sections_.end() || s->second.find(key) == s->second.end())
        throw ConfigError(origin_ + ": missing required key [" + section + "] " + key);
    const Entry& e = s->second.at(key);
    e.consumed = true;
    return e.value;
}

std::string ConfigFile::get_or(const std::string& section, const std::string& key,
                               std::string fallback) {
    if (!has(section, key)) return fallback;
    return get(section, key);
}

long ConfigFile::get_int(const std::string& section, const std::string& key, long fallback) {
    if (!has(section, key)) return fallback;
    std::string v = get(section, key);
    try {
        std::size_t used = 0;
        long out = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(origin_ + ": [" + section + "] " + key + " must be an integer, got '" +
                          v + "'");
    }
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) {
    if (!has(section, key)) return fallback;
    std::string v = get(section, key);
    try {
        std::size_t used = 0;
        double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError(origin_ + ": [" + section + "] " + key + " must be a number, got '" + v +
                          "'");
    }
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key, bool fallback) {
    if (!has(section, key)) return fallback;
    std::string v = get(section, key);
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(origin_ + ": [" + section + "] " + key + " must be a boolean, got '" + v +
                      "'");
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ',')) {
        token = trim(token);
        if (token.empty()) continue;
        std::size_t used = 0;
        out.push_back(std::stod(token, &used));
        if (used != token.size())
            throw ConfigError("bad number '" + token + "' in list '" + text + "'");
    }
    return out;
}

std::vector<double> ConfigFile::get_doubles(const std::string& section, const std::string& key) {
    std::string v = get(section, key);
    try {
        return parse_double_list(v);
    } catch (const std::exception& e) {
        throw ConfigError(origin_ + ": [" + section + "] " + key + ": " + e.what());
    }
}

std::vector<int> ConfigFile::get_ints(const std::string& section, const std::string& key) {
    std::vector<double> d = get_doubles(section, key);
    std::vector<int> out;
    for (double x : d) {
        if (x != std::floor(x))
            throw ConfigError(origin_ + ": [" + section + "] " + key + " must hold integers");
        out.push_back(static_cast<int>(x));
    }
    return out;
}

void ConfigFile::reject_unknown() const {
    std::string complaints;
    for (const auto& [section, entries] : sections_)
        for (const auto& [key, entry] : entries)
            if (!entry.consumed)
                complaints += "  [" + section + "] " + key + " (line " +
                              std::to_string(entry.line) + ")\n";
    if (!complaints.empty())
        throw ConfigError(origin_ + ": unknown keys:\n" + complaints);
}

GeneratorSpec generator_spec_from_config(ConfigFile& cfg, std::uint64_t seed_override,
                                         bool has_seed_override) {
    const std::string S = "generator";
    GeneratorSpec base = GeneratorSpec::default_spec(0);

    GeneratorSpec spec;
    spec.views = static_cast<int>(cfg.get_int(S, "views", base.views));
    spec.classes = static_cast<int>(cfg.get_int(S, "classes", base.classes));
    spec.frames = static_cast<int>(cfg.get_int(S, "frames", base.frames));
    spec.emission_std = cfg.get_double(S, "emission_std", base.emission_std);
    spec.seed = static_cast<std::uint64_t>(cfg.get_int(S, "seed", 0));
    if (has_seed_override) spec.seed = seed_override;

    if (cfg.has(S, "feature_dims"))
        spec.feature_dims = cfg.get_ints(S, "feature_dims");
    else
        spec.feature_dims.assign(spec.views, 8);

    if (cfg.has(S, "imbalance"))
        spec.imbalance = cfg.get_doubles(S, "imbalance");
    else
        spec.imbalance.assign(spec.classes, 1.0 / spec.classes);

    // Transition matrix: explicit rows, or self_transition + imbalance with
    // optional forbidden entries.
    if (cfg.has(S, "transition")) {
        std::string rows = cfg.get(S, "transition");
        std::istringstream in(rows);
        std::string row;
        while (std::getline(in, row, ';')) spec.transition.push_back(parse_double_list(row));
    } else {
        double self = cfg.get_double(S, "self_transition", 0.9);
        spec.transition.assign(spec.classes, std::vector<double>(spec.classes, 0.0));
        for (int i = 0; i < spec.classes; ++i)
            for (int j = 0; j < spec.classes; ++j)
                spec.transition[i][j] = (i == j ? self : 0.0) + (1.0 - self) * spec.imbalance[j];
        if (cfg.has(S, "forbidden")) {
            std::string pairs = cfg.get(S, "forbidden");
            std::istringstream in(pairs);
            std::string pair;
            while (std::getline(in, pair, ';')) {
                std::size_t gt = pair.find('>');
                if (gt == std::string::npos)
                    throw ConfigError("[generator] forbidden entries look like 'from>to'");
                int from = std::stoi(pair.substr(0, gt));
                int to = std::stoi(pair.substr(gt + 1));
                if (from < 0 || from >= spec.classes || to < 0 || to >= spec.classes)
                    throw ConfigError("[generator] forbidden transition outside [0, N)");
                spec.transition[from][to] = 0.0;
            }
            for (auto& trow : spec.transition) {
                double sum = 0.0;
                for (double p : trow) sum += p;
                if (sum <= 0.0) throw ConfigError("[generator] a transition row became all-zero");
                for (double& p : trow) p /= sum;
            }
        }
    }

    // Visibility: "class:view,view;class:view" entries; default everything
    // visible everywhere.
    spec.visibility.assign(spec.classes, std::vector<bool>(spec.views, true));
    if (cfg.has(S, "visibility")) {
        spec.visibility.assign(spec.classes, std::vector<bool>(spec.views, false));
        std::string text = cfg.get(S, "visibility");
        std::istringstream in(text);
        std::string item;
        while (std::getline(in, item, ';')) {
            std::size_t colon = item.find(':');
            if (colon == std::string::npos)
                throw ConfigError("[generator] visibility entries look like 'class:view,view'");
            int klass = std::stoi(item.substr(0, colon));
            if (klass < 0 || klass >= spec.classes)
                throw ConfigError("[generator] visibility class outside [0, N)");
            std::istringstream vs(item.substr(colon + 1));
            std::string vtok;
            while (std::getline(vs, vtok, ',')) {
                int view = std::stoi(vtok);
                if (view < 0 || view >= spec.views)
                    throw ConfigError("[generator] visibility view outside [0, V)");
                spec.visibility[klass][view] = true;
            }
        }
    }

    // Emission means: explicit mean.<class>.<view> keys, or a separation
    // placed on the class-indexed axis.
    double separation = cfg.get_double(S, "emission_separation", 4.0);
    spec.emission_mean.assign(spec.classes, std::vector<std::vector<double>>(spec.views));
    for (int c = 0; c < spec.classes; ++c)
        for (int v = 0; v < spec.views; ++v) {
            std::string key = "mean." + std::to_string(c) + "." + std::to_string(v);
            if (cfg.has(S, key)) {
                spec.emission_mean[c][v] = cfg.get_doubles(S, key);
            } else {
                spec.emission_mean[c][v].assign(spec.feature_dims[v], 0.0);
                if (spec.visibility[c][v] && c < spec.feature_dims[v])
                    spec.emission_mean[c][v][c] = separation;
            }
        }

    spec.validate();
    return spec;
}

ModelConfig model_config_from_config(ConfigFile& cfg, std::uint64_t seed_override,
                                     bool has_seed_override) {
    ModelConfig mc;
    mc.views = static_cast<int>(cfg.get_int("model", "views", mc.views));
    mc.latent_dim = static_cast<int>(cfg.get_int("model", "latent_dim", mc.latent_dim));
    mc.hidden_dim = static_cast<int>(cfg.get_int("model", "hidden_dim", mc.hidden_dim));
    mc.num_labels = static_cast<int>(cfg.get_int("model", "num_labels", mc.num_labels));
    mc.embed_dim = static_cast<int>(cfg.get_int("model", "embed_dim", mc.embed_dim));
    mc.mlp_hidden = static_cast<int>(cfg.get_int("model", "mlp_hidden", mc.mlp_hidden));
    if (cfg.has("model", "feature_dims"))
        mc.feature_dims = cfg.get_ints("model", "feature_dims");
    else
        mc.feature_dims.assign(mc.views, 8);

    mc.lambda_elbo = cfg.get_double("train", "lambda_elbo", mc.lambda_elbo);
    mc.learning_rate = cfg.get_double("train", "learning_rate", mc.learning_rate);
    mc.epochs = static_cast<int>(cfg.get_int("train", "epochs", mc.epochs));
    mc.batch_size = static_cast<int>(cfg.get_int("train", "batch_size", mc.batch_size));
    mc.train_window = static_cast<int>(cfg.get_int("train", "train_window", mc.train_window));
    mc.steps_per_epoch =
        static_cast<int>(cfg.get_int("train", "steps_per_epoch", mc.steps_per_epoch));
    mc.balanced_sampling = cfg.get_bool("train", "balanced_sampling", mc.balanced_sampling);
    mc.seed = static_cast<std::uint64_t>(cfg.get_int("train", "seed", 0));
    if (has_seed_override) mc.seed = seed_override;
    mc.validate();
    return mc;
}

}  // namespace mvladdm
