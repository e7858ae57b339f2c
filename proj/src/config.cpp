#include "corrstyle/config.hpp"

#include <charconv>
#include <sstream>

#include "corrstyle/error.hpp"
#include "corrstyle/io.hpp"

namespace corrstyle {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

const char* const kOptionPrefix = "backbone.option.";

}  // namespace

Config Config::defaults() {
    Config c;
    c.values_ = {
        {"seed", "0"},
        {"backbone.checkpoint", "builtin:patch-attention-ldm"},
        {"backbone.total_steps", "50"},
        {"backbone.train_steps", "1000"},
        {"backbone.beta_start", "0.00085"},
        {"backbone.beta_end", "0.012"},
        {"image.size", "0"},
        {"correspondence.timesteps", "1,11,21,31,41"},
        {"correspondence.layers", "all"},
        {"correspondence.alpha", "0.1"},
        {"correspondence.keypoints", "data/fixtures/keypoints.jsonl"},
        {"correspondence.cache", "outputs/locator.json"},
        {"correspondence.locator", "auto"},
        {"injection.w", "0.6"},
        {"injection.gamma", "0.7"},
        {"injection.start_step", "49"},
        {"injection.blocks", "auto"},
        {"injection.swap_blocks", "all"},
        {"injection.score_modulated", "false"},
        {"cycle.tau_c", "auto"},
        {"cycle.tau_s", "auto"},
        {"cycle.max_iters", "5"},
        {"cycle.comparator", "paper-as-written"},
        {"cycle.adain", "true"},
        {"cycle.adaptive", "true"},
        {"cycle.content_criterion", "true"},
        {"cycle.style_criterion", "true"},
        {"losses.style_layers", "conv1,conv2,conv3,conv4,conv5"},
        {"losses.gram_normalize", "true"},
        {"metrics.extractor", "builtin:oriented-pyramid"},
        {"metrics.fid_extractor", "builtin:oriented-pyramid"},
        {"metrics.cfsd_layer", "conv3"},
        {"metrics.assets", ""},
        {"pipeline.workers", "1"},
        {"pipeline.output_dir", "outputs"},
        {"pipeline.run_id", "auto"},
        {"ablation.w", "0.3,0.6,1.8,2.4,3.0"},
        {"ablation.iterations", "1,2,3,4,5"},
        {"ablation.start_step", "1,25,45,49,50"},
    };
    return c;
}

void Config::merge_file(const std::filesystem::path& path) { merge_text(read_text(path), path.string()); }

void Config::merge_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        try {
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void Config::apply(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
    if (key.empty()) throw ConfigError("empty config key");
    const bool option = key.rfind(kOptionPrefix, 0) == 0 && key.size() > std::string(kOptionPrefix).size();
    if (!option && !values_.count(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
}

double Config::number(const std::string& key) const {
    const std::string& v = get(key);
    double out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
    }
    return out;
}

int Config::integer(const std::string& key) const {
    const std::string& v = get(key);
    int out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
    }
    return out;
}

bool Config::flag(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError("config key '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::string> Config::list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream in(get(key));
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<int> Config::integers(const std::string& key) const {
    std::vector<int> out;
    for (const auto& item : list(key)) {
        int v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size()) {
            throw ConfigError("config key '" + key + "' expects integers, got '" + item + "'");
        }
        out.push_back(v);
    }
    return out;
}

std::vector<double> Config::numbers(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : list(key)) {
        double v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (ec != std::errc() || ptr != item.data() + item.size()) {
            throw ConfigError("config key '" + key + "' expects numbers, got '" + item + "'");
        }
        out.push_back(v);
    }
    return out;
}

std::map<std::string, std::string> Config::section(const std::string& prefix) const {
    std::map<std::string, std::string> out;
    for (auto it = values_.lower_bound(prefix); it != values_.end() && it->first.rfind(prefix, 0) == 0; ++it) {
        out[it->first.substr(prefix.size())] = it->second;
    }
    return out;
}

std::string Config::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

std::string Config::hash() const { return sha256_hex(canonical()); }

}  // namespace corrstyle
