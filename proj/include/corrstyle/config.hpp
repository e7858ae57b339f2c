#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace corrstyle {

// Flat "section.key = value" settings layered as defaults < file < overrides.
// Only keys present in the defaults are accepted, except under
// "backbone.option." which is passed through to the checkpoint loader.
class Config {
public:
    static Config defaults();

    // Lines of "key = value"; '#' starts a comment.
    void merge_file(const std::filesystem::path& path);
    void merge_text(const std::string& text, const std::string& origin = "config");
    // "key=value".
    void apply(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    const std::string& get(const std::string& key) const;
    double number(const std::string& key) const;
    int integer(const std::string& key) const;
    bool flag(const std::string& key) const;
    // Comma-separated, whitespace-trimmed, empty items dropped.
    std::vector<std::string> list(const std::string& key) const;
    std::vector<int> integers(const std::string& key) const;
    std::vector<double> numbers(const std::string& key) const;
    // Entries under `prefix`, with the prefix stripped.
    std::map<std::string, std::string> section(const std::string& prefix) const;

    const std::map<std::string, std::string>& values() const { return values_; }
    // Sorted "key = value" lines; merge_text(canonical()) reproduces the config.
    std::string canonical() const;
    std::string hash() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace corrstyle
