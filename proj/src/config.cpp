#include "adrctl/config.hpp"

#include <fstream>
#include <sstream>

#include "adrctl/csv.hpp"
#include "adrctl/errors.hpp"

namespace adrctl {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cli", "cannot read config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.parent_path());
}

Config Config::parse(const std::string& text, std::filesystem::path base_dir) {
    Config cfg;
    cfg.text_ = text;
    cfg.base_dir_ = std::move(base_dir);
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = "config line " + std::to_string(lineno);
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("cli", where + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) throw ConfigError("cli", where + ": empty section name");
            cfg.entries_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("cli", where + ": expected key = value");
        if (section.empty()) throw ConfigError("cli", where + ": key outside any section");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("cli", where + ": empty key");
        if (!cfg.entries_[section].emplace(key, value).second)
            throw ConfigError("cli", where + ": duplicate key '" + key + "'");
    }
    return cfg;
}

bool Config::has(const std::string& section, const std::string& key) const {
    auto s = entries_.find(section);
    return s != entries_.end() && s->second.count(key);
}

bool Config::has_section(const std::string& section) const { return entries_.count(section); }

std::string Config::get_string(const std::string& section, const std::string& key) const {
    if (!has(section, key))
        throw ConfigError("cli", "missing required key [" + section + "] " + key);
    return entries_.at(section).at(key);
}

double Config::get_double(const std::string& section, const std::string& key) const {
    try {
        return parse_double(get_string(section, key));
    } catch (const ConfigError&) {
        if (!has(section, key)) throw;
        throw ConfigError("cli", "[" + section + "] " + key + " is not a number");
    }
}

int Config::get_int(const std::string& section, const std::string& key) const {
    const std::string v = get_string(section, key);
    std::size_t used = 0;
    int out = 0;
    try {
        out = std::stoi(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size())
        throw ConfigError("cli", "[" + section + "] " + key + " is not an integer");
    return out;
}

std::vector<std::string> Config::get_strings(const std::string& section,
                                             const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream in(get_string(section, key));
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(trim(item));
    return out;
}

std::vector<double> Config::get_doubles(const std::string& section, const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : get_strings(section, key)) {
        try {
            out.push_back(parse_double(s));
        } catch (const ConfigError&) {
            throw ConfigError("cli", "[" + section + "] " + key + " must be a list of numbers");
        }
    }
    return out;
}

double Config::get_double_or(const std::string& section, const std::string& key,
                             double fallback) const {
    return has(section, key) ? get_double(section, key) : fallback;
}

int Config::get_int_or(const std::string& section, const std::string& key, int fallback) const {
    return has(section, key) ? get_int(section, key) : fallback;
}

std::filesystem::path Config::get_path(const std::string& section, const std::string& key) const {
    return resolve_path(get_string(section, key));
}

std::filesystem::path Config::resolve_path(const std::string& path) const {
    std::filesystem::path p = path;
    if (p.is_relative()) p = base_dir_ / p;
    if (!std::filesystem::exists(p)) throw ConfigError("cli", "file '" + p.string() + "' not found");
    return p;
}

void Config::validate(const std::map<std::string, std::set<std::string>>& schema) const {
    for (const auto& [section, keys] : entries_) {
        auto s = schema.find(section);
        if (s == schema.end()) throw ConfigError("cli", "unknown section [" + section + "]");
        for (const auto& [key, value] : keys)
            if (!s->second.count(key))
                throw ConfigError("cli", "unknown key '" + key + "' in [" + section + "]");
    }
}

}  // namespace adrctl
