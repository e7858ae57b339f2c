#include "corrstyle/correspondence.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "corrstyle/image.hpp"
#include "corrstyle/io.hpp"

namespace corrstyle {

using nlohmann::json;

void CorrespondenceMap::validate() const {
    if (source_height <= 0 || source_width <= 0 || target_height <= 0 || target_width <= 0) {
        throw DimensionError("correspondence map has an empty grid");
    }
    if (size() != source_height * source_width || score.size() != size()) {
        throw DimensionError("correspondence map is not total over its " + std::to_string(source_width) + "x" +
                             std::to_string(source_height) + " source grid");
    }
    for (Index i = 0; i < size(); ++i) {
        const Index t = target[std::size_t(i)];
        if (t < 0 || t >= target_height * target_width) {
            throw DimensionError("correspondence target " + std::to_string(t) + " outside the target grid");
        }
        if (!(score(i) >= -1.0 && score(i) <= 1.0)) {
            throw DimensionError("correspondence score outside [-1, 1]");
        }
    }
}

CorrespondenceMap CorrespondenceMap::resampled(Index src_h, Index src_w, Index dst_h, Index dst_w) const {
    if (src_h <= 0 || src_w <= 0 || dst_h <= 0 || dst_w <= 0) throw DimensionError("resampled: empty grid");
    if (src_h == source_height && src_w == source_width && dst_h == target_height && dst_w == target_width) {
        return *this;
    }
    CorrespondenceMap out;
    out.source_height = src_h;
    out.source_width = src_w;
    out.target_height = dst_h;
    out.target_width = dst_w;
    out.locator = locator;
    out.target.resize(std::size_t(src_h * src_w));
    out.score.resize(src_h * src_w);
    for (Index y = 0; y < src_h; ++y) {
        const Index my = std::min(source_height - 1, (2 * y + 1) * source_height / (2 * src_h));
        for (Index x = 0; x < src_w; ++x) {
            const Index mx = std::min(source_width - 1, (2 * x + 1) * source_width / (2 * src_w));
            const Index m = my * source_width + mx;
            const Index tx = target_x(m), ty = target_y(m);
            const Index ox = std::min(dst_w - 1, (2 * tx + 1) * dst_w / (2 * target_width));
            const Index oy = std::min(dst_h - 1, (2 * ty + 1) * dst_h / (2 * target_height));
            out.target[std::size_t(y * src_w + x)] = oy * dst_w + ox;
            out.score(y * src_w + x) = score(m);
        }
    }
    return out;
}

CorrespondenceMap dense_match(const FeatureMap& source, const FeatureMap& target) {
    if (source.locator != target.locator) {
        throw ConfigError("dense_match: feature maps come from different locators (" + source.locator.to_string() +
                          " vs " + target.locator.to_string() + ")");
    }
    CorrespondenceMap map = dense_match(source.data, target.data);
    map.locator = source.locator;
    return map;
}

std::vector<Keypoint> predict_keypoints(const CorrespondenceMap& map, const BenchmarkPair& pair) {
    if (pair.source_height <= 0 || pair.source_width <= 0 || pair.target_height <= 0 || pair.target_width <= 0) {
        throw DimensionError("predict_keypoints: pair '" + pair.id + "' has no image size");
    }
    std::vector<Keypoint> out;
    out.reserve(pair.keypoints.size());
    for (const auto& kp : pair.keypoints) {
        const Index gx = std::clamp(Index(std::floor(kp.source.x * double(map.source_width) / double(pair.source_width))),
                                    Index(0), map.source_width - 1);
        const Index gy = std::clamp(Index(std::floor(kp.source.y * double(map.source_height) / double(pair.source_height))),
                                    Index(0), map.source_height - 1);
        const Index m = gy * map.source_width + gx;
        const double sx = double(pair.target_width) / double(map.target_width);
        const double sy = double(pair.target_height) / double(map.target_height);
        out.push_back(Keypoint{(double(map.target_x(m)) + 0.5) * sx, (double(map.target_y(m)) + 0.5) * sy});
    }
    return out;
}

double pck_score(const std::vector<Keypoint>& predicted, const std::vector<KeypointPair>& keypoints, double alpha,
                 Index image_height, Index image_width) {
    if (keypoints.empty()) throw ValidationError("pck_score: empty keypoint set");
    if (!(alpha > 0)) throw ConfigError("pck_score: alpha must be positive");
    if (predicted.size() != keypoints.size()) {
        throw DimensionError("pck_score: " + std::to_string(predicted.size()) + " predictions for " +
                             std::to_string(keypoints.size()) + " keypoints");
    }
    const double threshold = alpha * double(std::max(image_height, image_width));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < keypoints.size(); ++i) {
        const double dx = predicted[i].x - keypoints[i].target.x;
        const double dy = predicted[i].y - keypoints[i].target.y;
        if (std::hypot(dx, dy) <= threshold) ++correct;
    }
    return double(correct) / double(keypoints.size());
}

GridSearchResult grid_search(const std::vector<BenchmarkPair>& pairs, const FeaturePairSource& source,
                             const std::vector<int>& timesteps, const std::vector<std::string>& layers,
                             double alpha) {
    if (pairs.empty()) throw ValidationError("grid_search: no benchmark pairs");
    if (timesteps.empty() || layers.empty()) throw ConfigError("grid_search: empty timestep or layer set");
    if (!(alpha > 0)) throw ConfigError("grid_search: alpha must be positive");

    std::map<FeatureLocator, double> sums;
    std::set<FeatureLocator> missing;
    for (int t : timesteps) {
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            std::vector<std::pair<FeatureMap, FeatureMap>> maps;
            bool batched = true;
            try {
                maps = source(p, t, layers);
                if (maps.size() != layers.size()) throw DimensionError("feature source returned the wrong layer count");
            } catch (const std::exception&) {
                batched = false;
            }
            for (std::size_t li = 0; li < layers.size(); ++li) {
                const FeatureLocator loc{t, layers[li]};
                if (missing.count(loc)) continue;
                try {
                    std::pair<FeatureMap, FeatureMap> features;
                    if (batched) {
                        features = std::move(maps[li]);
                    } else {
                        auto single = source(p, t, {layers[li]});
                        if (single.size() != 1) throw DimensionError("feature source returned the wrong layer count");
                        features = std::move(single.front());
                    }
                    const CorrespondenceMap map = dense_match(features.first.data, features.second.data);
                    const auto predicted = predict_keypoints(map, pairs[p]);
                    sums[loc] += pck_score(predicted, pairs[p].keypoints, alpha, pairs[p].target_height,
                                           pairs[p].target_width);
                } catch (const std::exception&) {
                    missing.insert(loc);
                    sums.erase(loc);
                }
            }
        }
    }
    if (sums.empty()) throw Error("grid_search: feature extraction failed for every (t, l) cell");

    GridSearchResult result;
    result.missing = std::move(missing);
    bool first = true;
    for (const auto& [loc, sum] : sums) {
        const double m = sum / double(pairs.size());
        result.scores[loc] = m;
        if (first || m > result.best_score) {
            result.best = loc;
            result.best_score = m;
            first = false;
        }
    }
    return result;
}

FeaturePairSource backbone_feature_source(const Backbone& backbone, const std::vector<BenchmarkPair>& pairs) {
    return [&backbone, &pairs](std::size_t index, int timestep, const std::vector<std::string>& layers) {
        const BenchmarkPair& pair = pairs.at(index);
        const Image src = load_png(pair.source_path);
        const Image dst = load_png(pair.target_path);
        auto fs = backbone.extract_features_at(src, timestep, layers, pair.id + ":source");
        auto ft = backbone.extract_features_at(dst, timestep, layers, pair.id + ":target");
        std::vector<std::pair<FeatureMap, FeatureMap>> out;
        for (std::size_t i = 0; i < layers.size(); ++i) out.emplace_back(std::move(fs[i]), std::move(ft[i]));
        return out;
    };
}

namespace {

std::vector<Keypoint> parse_points(const json& value, const std::string& what) {
    if (!value.is_array()) throw ValidationError(what + " must be an array of [x, y]");
    std::vector<Keypoint> out;
    for (const auto& p : value) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
            throw ValidationError(what + " entries must be [x, y]");
        }
        out.push_back(Keypoint{p[0].get<double>(), p[1].get<double>()});
    }
    return out;
}

bool inside(const Keypoint& k, Index h, Index w) {
    return k.x >= 0 && k.y >= 0 && k.x <= double(w) && k.y <= double(h);
}

}  // namespace

std::vector<BenchmarkPair> load_keypoint_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open keypoint manifest " + path.string());
    const auto base = path.parent_path();
    std::vector<BenchmarkPair> pairs;
    std::vector<std::string> errors;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json rec = json::parse(line);
            BenchmarkPair pair;
            pair.id = rec.at("id").get<std::string>();
            pair.source_path = base / rec.at("source").get<std::string>();
            pair.target_path = base / rec.at("target").get<std::string>();
            const auto src = parse_points(rec.at("source_keypoints"), "source_keypoints");
            const auto dst = parse_points(rec.at("target_keypoints"), "target_keypoints");
            if (src.size() != dst.size() || src.empty()) {
                throw ValidationError("keypoint lists must be non-empty and of equal length");
            }
            const Image a = load_png(pair.source_path);
            const Image b = load_png(pair.target_path);
            pair.source_height = a.height;
            pair.source_width = a.width;
            pair.target_height = b.height;
            pair.target_width = b.width;
            for (std::size_t i = 0; i < src.size(); ++i) {
                if (!inside(src[i], a.height, a.width) || !inside(dst[i], b.height, b.width)) {
                    throw ValidationError("keypoint " + std::to_string(i) + " lies outside its image");
                }
                pair.keypoints.push_back(KeypointPair{src[i], dst[i], pair.id});
            }
            pairs.push_back(std::move(pair));
        } catch (const std::exception& e) {
            errors.push_back("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!errors.empty()) {
        std::ostringstream msg;
        msg << "keypoint manifest " << path.string() << " has " << errors.size() << " invalid entries";
        for (const auto& e : errors) msg << "\n  " << e;
        throw ValidationError(msg.str());
    }
    if (pairs.empty()) throw ValidationError("keypoint manifest " + path.string() + " is empty");
    return pairs;
}

void save_locator_cache(const std::filesystem::path& path, const LocatorCache& cache) {
    nlohmann::ordered_json table = nlohmann::ordered_json::array();
    std::set<FeatureLocator> cells(cache.result.missing);
    for (const auto& [loc, m] : cache.result.scores) cells.insert(loc);
    for (const auto& loc : cells) {
        auto it = cache.result.scores.find(loc);
        nlohmann::ordered_json row;
        row["t"] = loc.timestep;
        row["l"] = loc.layer;
        row["M"] = it == cache.result.scores.end() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(it->second);
        table.push_back(row);
    }
    nlohmann::ordered_json doc;
    doc["checkpoint"] = cache.checkpoint;
    doc["t_star"] = cache.best.timestep;
    doc["l_star"] = cache.best.layer;
    doc["alpha"] = cache.alpha;
    doc["M"] = table;
    write_text_atomic(path, doc.dump(2) + "\n");
}

LocatorCache load_locator_cache(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open locator cache " + path.string());
    try {
        const json doc = json::parse(in);
        LocatorCache cache;
        cache.checkpoint = doc.at("checkpoint").get<std::string>();
        cache.best = FeatureLocator{doc.at("t_star").get<int>(), doc.at("l_star").get<std::string>()};
        cache.alpha = doc.at("alpha").get<double>();
        for (const auto& row : doc.at("M")) {
            const FeatureLocator loc{row.at("t").get<int>(), row.at("l").get<std::string>()};
            if (row.at("M").is_null()) {
                cache.result.missing.insert(loc);
            } else {
                cache.result.scores[loc] = row.at("M").get<double>();
            }
        }
        cache.result.best = cache.best;
        auto it = cache.result.scores.find(cache.best);
        cache.result.best_score = it == cache.result.scores.end() ? 0.0 : it->second;
        return cache;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("locator cache " + path.string() + ": " + e.what());
    }
}

}  // namespace corrstyle
