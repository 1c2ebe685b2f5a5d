#pragma once

// Line-oriented scenario configuration:
//   [section]
//   key = value      # comment
// Keys are unique per section. Lists are comma separated.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace adrctl {

class Config {
public:
    /// Throws ConfigError for unreadable files or malformed lines.
    static Config load(const std::filesystem::path& path);
    static Config parse(const std::string& text, std::filesystem::path base_dir = {});

    bool has(const std::string& section, const std::string& key) const;
    bool has_section(const std::string& section) const;

    std::string get_string(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key) const;
    int get_int(const std::string& section, const std::string& key) const;
    std::vector<double> get_doubles(const std::string& section, const std::string& key) const;
    std::vector<std::string> get_strings(const std::string& section, const std::string& key) const;

    double get_double_or(const std::string& section, const std::string& key, double fallback) const;
    int get_int_or(const std::string& section, const std::string& key, int fallback) const;

    /// Resolves a path value relative to the config file's directory.
    std::filesystem::path get_path(const std::string& section, const std::string& key) const;
    /// Same resolution for a literal path; throws ConfigError if missing.
    std::filesystem::path resolve_path(const std::string& path) const;

    /// Throws ConfigError for any section or key outside `schema`.
    void validate(const std::map<std::string, std::set<std::string>>& schema) const;

    const std::string& source_text() const { return text_; }
    const std::map<std::string, std::map<std::string, std::string>>& entries() const {
        return entries_;
    }

private:
    std::string text_;
    std::filesystem::path base_dir_;
    std::map<std::string, std::map<std::string, std::string>> entries_;
};

}  // namespace adrctl
