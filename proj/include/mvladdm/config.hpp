#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mvladdm/errors.hpp"
#include "mvladdm/model.hpp"
#include "mvladdm/synth.hpp"

namespace mvladdm {

// key = value files with [section] headers; '#' starts a comment. Every key
// must be consumed by the reader, otherwise reject_unknown() names it.
class ConfigFile {
 public:
    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key);
    std::string get_or(const std::string& section, const std::string& key, std::string fallback);

    long get_int(const std::string& section, const std::string& key, long fallback);
    double get_double(const std::string& section, const std::string& key, double fallback);
    bool get_bool(const std::string& section, const std::string& key, bool fallback);
    std::vector<double> get_doubles(const std::string& section, const std::string& key);
    std::vector<int> get_ints(const std::string& section, const std::string& key);

    // Throws ConfigError listing every key that was never read.
    void reject_unknown() const;

 private:
    struct Entry {
        std::string value;
        long line = 0;
        mutable bool consumed = false;
    };
    std::string origin_;
    std::map<std::string, std::map<std::string, Entry>> sections_;
};

// [generator] section -> GeneratorSpec, with either an explicit transition
// matrix / emission means or the compact construction keys.
GeneratorSpec generator_spec_from_config(ConfigFile& cfg, std::uint64_t seed_override,
                                         bool has_seed_override);

// [model] + [train] sections -> ModelConfig.
ModelConfig model_config_from_config(ConfigFile& cfg, std::uint64_t seed_override,
                                     bool has_seed_override);

std::vector<double> parse_double_list(const std::string& text);

}  // namespace mvladdm
