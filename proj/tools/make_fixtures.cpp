// Writes the procedural desk-scale fixture set: 5 content scenes, 5 style
// textures, the 5x5 dataset manifest, and a 20-pair keypoint benchmark built
// from known geometric warps of the content scenes.
#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>

#include "corrstyle/image.hpp"

namespace fs = std::filesystem;
using corrstyle::Image;
using corrstyle::Index;

namespace {

struct Rgb {
    double r, g, b;
};

Rgb mix(Rgb a, Rgb b, double t) { return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t}; }

// Renders with 3x3 supersampling; `shade` receives normalized coordinates.
Image render(Index size, const std::function<Rgb(double, double)>& shade) {
    Image img(3, size, size);
    for (Index y = 0; y < size; ++y) {
        for (Index x = 0; x < size; ++x) {
            Rgb acc{0, 0, 0};
            for (int sy = 0; sy < 3; ++sy) {
                for (int sx = 0; sx < 3; ++sx) {
                    const Rgb c = shade((x + (sx + 0.5) / 3.0) / double(size), (y + (sy + 0.5) / 3.0) / double(size));
                    acc.r += c.r / 9;
                    acc.g += c.g / 9;
                    acc.b += c.b / 9;
                }
            }
            img(0, y, x) = std::clamp(acc.r, 0.0, 1.0);
            img(1, y, x) = std::clamp(acc.g, 0.0, 1.0);
            img(2, y, x) = std::clamp(acc.b, 0.0, 1.0);
        }
    }
    return img;
}

bool in_circle(double x, double y, double cx, double cy, double r) {
    return (x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r;
}

Image house(Index n) {
    return render(n, [](double x, double y) {
        Rgb c = mix({0.45, 0.65, 0.95}, {0.85, 0.92, 1.0}, y / 0.6);
        if (in_circle(x, y, 0.8, 0.18, 0.09)) c = {1.0, 0.85, 0.3};
        if (y > 0.62) c = mix({0.35, 0.6, 0.25}, {0.2, 0.4, 0.15}, (y - 0.62) / 0.38);
        const bool wall = x > 0.25 && x < 0.65 && y > 0.42 && y < 0.78;
        const bool roof = y > 0.22 && y <= 0.42 && std::abs(x - 0.45) < (y - 0.22) * 1.25;
        if (roof) c = {0.6, 0.15, 0.12};
        if (wall) c = {0.9, 0.8, 0.6};
        if (x > 0.4 && x < 0.5 && y > 0.6 && y < 0.78) c = {0.35, 0.2, 0.1};
        if (((x > 0.29 && x < 0.37) || (x > 0.53 && x < 0.61)) && y > 0.5 && y < 0.58) c = {0.3, 0.5, 0.8};
        return c;
    });
}

Image flower(Index n) {
    return render(n, [](double x, double y) {
        Rgb c = mix({0.15, 0.35, 0.15}, {0.35, 0.55, 0.25}, y);
        const double dx = x - 0.5, dy = y - 0.45;
        const double r = std::hypot(dx, dy), a = std::atan2(dy, dx);
        if (x > 0.485 && x < 0.515 && y > 0.45) c = {0.2, 0.5, 0.15};
        const double petal = 0.22 + 0.1 * std::cos(6 * a);
        if (r < petal) c = mix({0.95, 0.4, 0.6}, {0.8, 0.2, 0.45}, r / petal);
        if (r < 0.08) c = {0.95, 0.8, 0.2};
        return c;
    });
}

Image boat(Index n) {
    return render(n, [](double x, double y) {
        Rgb c = mix({0.95, 0.7, 0.5}, {0.6, 0.7, 0.9}, y / 0.55);
        const double wave = 0.58 + 0.015 * std::sin(x * 40.0);
        if (y > wave) c = mix({0.1, 0.35, 0.6}, {0.05, 0.2, 0.4}, (y - wave) / (1 - wave)) ;
        if (y > wave && std::fmod(y * 30.0 + std::sin(x * 12.0), 1.0) < 0.15) c = mix(c, {0.8, 0.9, 1.0}, 0.5);
        const bool hull = y > 0.5 && y < 0.62 && x > 0.25 + (y - 0.5) * 1.2 && x < 0.75 - (y - 0.5) * 1.2;
        if (hull) c = {0.7, 0.15, 0.1};
        if (x > 0.49 && x < 0.51 && y > 0.15 && y < 0.5) c = {0.3, 0.2, 0.1};
        if (y > 0.18 && y < 0.48 && x > 0.51 && x < 0.51 + (y - 0.18) * 0.8) c = {0.95, 0.95, 0.9};
        return c;
    });
}

Image mountains(Index n) {
    return render(n, [](double x, double y) {
        Rgb c = mix({0.55, 0.75, 0.95}, {0.95, 0.95, 0.85}, y / 0.5);
        const double far = 0.45 - 0.18 * std::exp(-std::pow((x - 0.35) / 0.15, 2)) - 0.1 * std::exp(-std::pow((x - 0.75) / 0.12, 2));
        const double near = 0.65 - 0.15 * std::exp(-std::pow((x - 0.6) / 0.2, 2)) + 0.03 * std::sin(x * 25);
        if (y > far) c = y < far + 0.05 ? Rgb{0.95, 0.95, 1.0} : Rgb{0.45, 0.5, 0.65};
        if (y > near) c = mix({0.25, 0.45, 0.2}, {0.1, 0.25, 0.1}, (y - near) / (1 - near));
        if (y > 0.85 && std::abs(x - 0.5 - (y - 0.85) * 0.8) < 0.03 + (y - 0.85) * 0.3) c = {0.6, 0.5, 0.35};
        return c;
    });
}

Image still_life(Index n) {
    return render(n, [](double x, double y) {
        Rgb c = mix({0.4, 0.3, 0.25}, {0.55, 0.45, 0.35}, x);
        if (y > 0.6) c = mix({0.6, 0.4, 0.2}, {0.45, 0.28, 0.15}, (y - 0.6) / 0.4);
        if (in_circle(x, y, 0.3, 0.55, 0.13)) c = mix({0.9, 0.2, 0.15}, {0.55, 0.05, 0.05}, std::hypot(x - 0.26, y - 0.51) / 0.2);
        if (in_circle(x, y, 0.58, 0.57, 0.11)) c = mix({0.95, 0.75, 0.2}, {0.7, 0.45, 0.05}, std::hypot(x - 0.55, y - 0.54) / 0.17);
        if (x > 0.68 && x < 0.82 && y > 0.25 && y < 0.68) c = mix({0.3, 0.55, 0.45}, {0.15, 0.35, 0.3}, (x - 0.68) / 0.14);
        if (x > 0.72 && x < 0.78 && y > 0.15 && y <= 0.25) c = {0.25, 0.45, 0.35};
        return c;
    });
}

// Dot clouds on a pale canvas.
Image pointillism(Index n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    struct Dot { double x, y, r; Rgb c; };
    std::vector<Dot> dots;
    const Rgb palette[] = {{0.95, 0.8, 0.2}, {0.2, 0.5, 0.85}, {0.9, 0.35, 0.3}, {0.3, 0.7, 0.35}, {0.95, 0.95, 0.9}};
    for (int i = 0; i < 900; ++i) dots.push_back({u(rng), u(rng), 0.012 + 0.012 * u(rng), palette[i % 5]});
    return render(n, [&](double x, double y) {
        Rgb c{0.92, 0.9, 0.82};
        for (const auto& d : dots) if (in_circle(x, y, d.x, d.y, d.r)) c = d.c;
        return c;
    });
}

Image pop_art(Index n) {
    return render(n, [](double x, double y) {
        const int qx = x < 0.5 ? 0 : 1, qy = y < 0.5 ? 0 : 1;
        const Rgb bg[] = {{1.0, 0.85, 0.0}, {0.0, 0.75, 0.85}, {0.95, 0.2, 0.55}, {0.3, 0.85, 0.3}};
        Rgb c = bg[qy * 2 + qx];
        const double cell = 1.0 / 24.0;
        const double fx = std::fmod(x, cell) / cell - 0.5, fy = std::fmod(y, cell) / cell - 0.5;
        if (fx * fx + fy * fy < 0.09) c = mix(c, {0.1, 0.1, 0.1}, 0.6);
        if (std::abs(std::fmod(x, 0.5)) < 0.015 || std::abs(std::fmod(y, 0.5)) < 0.015) c = {0.05, 0.05, 0.05};
        return c;
    });
}

Image brushwork(Index n) {
    return render(n, [](double x, double y) {
        const double swirl = std::sin(8 * x + 3 * std::sin(6 * y)) + std::cos(7 * y - 2 * std::cos(5 * x));
        const double stroke = 0.5 + 0.5 * std::sin(40 * (x * std::cos(swirl) + y * std::sin(swirl)));
        Rgb base = mix({0.1, 0.2, 0.55}, {0.95, 0.75, 0.25}, 0.5 + 0.25 * swirl);
        return mix(base, {0.95, 0.95, 0.85}, 0.3 * stroke);
    });
}

Image ink_wash(Index n) {
    return render(n, [](double x, double y) {
        double v = 0.95 - 0.25 * std::exp(-std::pow((y - 0.7 + 0.1 * std::sin(x * 9)) / 0.08, 2));
        v -= 0.5 * std::exp(-std::pow((x - 0.3 - 0.15 * std::sin(y * 7)) / 0.02, 2)) * (y > 0.2 ? 1 : 0);
        v -= 0.35 * std::exp(-std::pow((y - 0.3 - 0.2 * x) / 0.015, 2)) * (x > 0.4 && x < 0.9 ? 1 : 0);
        v -= 0.1 * (0.5 + 0.5 * std::sin(60 * x + 20 * y));
        v = std::clamp(v, 0.0, 1.0);
        return Rgb{v, v * 0.98, v * 0.93};
    });
}

Image cubism(Index n, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    struct Site { double x, y; Rgb c; };
    std::vector<Site> sites;
    const Rgb palette[] = {{0.55, 0.45, 0.3}, {0.75, 0.6, 0.4}, {0.35, 0.3, 0.25}, {0.6, 0.55, 0.5}, {0.8, 0.7, 0.5}, {0.3, 0.4, 0.45}};
    for (int i = 0; i < 40; ++i) sites.push_back({u(rng), u(rng), palette[i % 6]});
    return render(n, [&](double x, double y) {
        double best = 1e9, second = 1e9;
        Rgb c{0, 0, 0};
        for (const auto& s : sites) {
            const double d = std::abs(x - s.x) + std::abs(y - s.y);
            if (d < best) { second = best; best = d; c = s.c; }
            else if (d < second) second = d;
        }
        if (second - best < 0.008) c = {0.15, 0.12, 0.1};
        return c;
    });
}

// Applies `warp` (target -> source normalized coordinates) with bilinear lookup.
Image warp_image(const Image& src, const std::function<std::pair<double, double>(double, double)>& inverse) {
    Image out(3, src.height, src.width);
    for (Index y = 0; y < src.height; ++y) {
        for (Index x = 0; x < src.width; ++x) {
            auto [sx, sy] = inverse((x + 0.5) / double(src.width), (y + 0.5) / double(src.height));
            const double fx = std::clamp(sx * src.width - 0.5, 0.0, double(src.width - 1));
            const double fy = std::clamp(sy * src.height - 0.5, 0.0, double(src.height - 1));
            const Index x0 = Index(fx), y0 = Index(fy);
            const Index x1 = std::min(x0 + 1, src.width - 1), y1 = std::min(y0 + 1, src.height - 1);
            const double tx = fx - x0, ty = fy - y0;
            for (Index c = 0; c < 3; ++c) {
                out(c, y, x) = (1 - ty) * ((1 - tx) * src(c, y0, x0) + tx * src(c, y0, x1)) +
                               ty * ((1 - tx) * src(c, y1, x0) + tx * src(c, y1, x1));
            }
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generate the procedural fixture set"};
    std::string out_dir = "data/fixtures";
    Index size = 128;
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--size", size, "image side in pixels");
    CLI11_PARSE(app, argc, argv);

    const fs::path root(out_dir);
    fs::create_directories(root / "content");
    fs::create_directories(root / "style");
    fs::create_directories(root / "keypoints");

    const std::vector<std::pair<std::string, Image>> content = {
        {"house", house(size)}, {"flower", flower(size)}, {"boat", boat(size)},
        {"mountains", mountains(size)}, {"still_life", still_life(size)}};
    const std::vector<std::tuple<std::string, std::string, Image>> style = {
        {"dots", "Pointillism", pointillism(size, 7)},
        {"halftone", "Pop art", pop_art(size)},
        {"swirls", "Oil painting", brushwork(size)},
        {"ink", "Chinese Ink", ink_wash(size)},
        {"facets", "Cubism", cubism(size, 11)}};

    std::ofstream manifest(root / "suite.jsonl");
    for (const auto& [id, img] : content) {
        corrstyle::save_png(img, root / "content" / (id + ".png"));
        manifest << nlohmann::json{{"kind", "content"}, {"id", id}, {"path", "content/" + id + ".png"}}.dump() << "\n";
    }
    for (const auto& [id, category, img] : style) {
        corrstyle::save_png(img, root / "style" / (id + ".png"));
        manifest << nlohmann::json{{"kind", "style"}, {"id", id}, {"path", "style/" + id + ".png"}, {"category", category}}.dump() << "\n";
    }
    manifest << nlohmann::json{{"kind", "pairing"}, {"mode", "cartesian"}}.dump() << "\n";

    // Keypoint benchmark: each content scene under four warps whose forward
    // maps are known, keypoints on a 4x4 lattice.
    using Map = std::function<std::pair<double, double>(double, double)>;
    struct Warp { std::string name; Map forward, inverse; };
    const std::vector<Warp> warps = {
        {"flip", [](double x, double y) { return std::pair{1 - x, y}; }, [](double x, double y) { return std::pair{1 - x, y}; }},
        {"shift", [](double x, double y) { return std::pair{x + 0.125, y + 0.0625}; }, [](double x, double y) { return std::pair{x - 0.125, y - 0.0625}; }},
        {"zoom", [](double x, double y) { return std::pair{0.5 + (x - 0.5) * 1.25, 0.5 + (y - 0.5) * 1.25}; },
                 [](double x, double y) { return std::pair{0.5 + (x - 0.5) / 1.25, 0.5 + (y - 0.5) / 1.25}; }},
        {"shrink", [](double x, double y) { return std::pair{0.5 + (x - 0.5) * 0.8, 0.5 + (y - 0.5) * 0.8}; },
                   [](double x, double y) { return std::pair{0.5 + (x - 0.5) / 0.8, 0.5 + (y - 0.5) / 0.8}; }},
    };
    std::ofstream kp(root / "keypoints.jsonl");
    for (const auto& [id, img] : content) {
        for (const auto& w : warps) {
            const std::string target = id + "_" + w.name;
            corrstyle::save_png(warp_image(img, w.inverse), root / "keypoints" / (target + ".png"));
            nlohmann::json src = nlohmann::json::array(), dst = nlohmann::json::array();
            for (int gy = 0; gy < 4; ++gy) {
                for (int gx = 0; gx < 4; ++gx) {
                    const double nx = 0.2 + 0.2 * gx, ny = 0.2 + 0.2 * gy;
                    auto [tx, ty] = w.forward(nx, ny);
                    if (tx < 0 || tx >= 1 || ty < 0 || ty >= 1) continue;
                    src.push_back({nx * size, ny * size});
                    dst.push_back({tx * size, ty * size});
                }
            }
            kp << nlohmann::json{{"id", id + "/" + w.name},
                                 {"source", "content/" + id + ".png"},
                                 {"target", "keypoints/" + target + ".png"},
                                 {"source_keypoints", src},
                                 {"target_keypoints", dst}}.dump()
               << "\n";
        }
    }
    std::cout << "wrote fixtures to " << root << "\n";
    return 0;
}
