#include "pat/episodes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pat/errors.hpp"

namespace pat {

namespace {

constexpr std::array<const char*, kShapeFamilyCount> kFamilyNames = {
    "disk", "square", "triangle", "ring", "cross", "bar", "lshape", "diamond", "ellipse", "star", "hexagon", "crescent",
};

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

Texture class_texture(int i) {
    Texture t;
    t.kind = static_cast<TextureKind>(i % 4);
    t.period = 4.0 + double((i * 5) % 7);
    t.angle = double((i * 47) % 180) * std::numbers::pi / 180.0;
    t.level = 0.68 + 0.06 * double(i % 4);
    t.amplitude = 0.10 + 0.02 * double(i % 3);
    return t;
}

struct Pose {
    double cx, cy, radius, angle;
};

// Maps a pixel centre into the shape's local unit frame.
void to_local(const Pose& p, double px, double py, double& lx, double& ly) {
    const double dx = (px - p.cx) / p.radius;
    const double dy = (py - p.cy) / p.radius;
    const double c = std::cos(-p.angle), s = std::sin(-p.angle);
    lx = c * dx - s * dy;
    ly = s * dx + c * dy;
}

struct Canvas {
    std::size_t size;
    std::vector<double> value;  // gray intensity in [0,1]
};

void draw_shape(Canvas& cv, ShapeFamily f, const Pose& pose, const Texture& tex, double contrast, double background,
                Mask* mask) {
    for (std::size_t y = 0; y < cv.size; ++y) {
        for (std::size_t x = 0; x < cv.size; ++x) {
            double lx, ly;
            to_local(pose, double(x) + 0.5, double(y) + 0.5, lx, ly);
            if (!shape_contains(f, lx, ly)) continue;
            const double v = texture_value(tex, double(x), double(y));
            cv.value[y * cv.size + x] = background + (v - background) * contrast;
            if (mask) mask->at(y, x) = 1;
        }
    }
}

Sample render_sample(const std::vector<ShapeClass>& classes, int class_id, int size, std::size_t channels,
                     std::mt19937_64& rng) {
    const ShapeClass& cls = classes[std::size_t(class_id)];
    const std::size_t s = std::size_t(size);
    for (int attempt = 0; attempt < 200; ++attempt) {
        Canvas cv{s, std::vector<double>(s * s)};
        const double base = uniform(rng, 0.18, 0.32);
        const double gx = uniform(rng, -0.08, 0.08), gy = uniform(rng, -0.08, 0.08);
        std::normal_distribution<double> noise(0.0, 0.03);
        for (std::size_t y = 0; y < s; ++y)
            for (std::size_t x = 0; x < s; ++x)
                cv.value[y * s + x] = base + gx * (double(x) / double(s) - 0.5) + gy * (double(y) / double(s) - 0.5);

        // clutter from other families, low contrast
        std::uniform_int_distribution<int> n_clutter(1, 3);
        const int clutter = classes.size() > 1 ? n_clutter(rng) : 0;
        for (int c = 0; c < clutter; ++c) {
            int other;
            do {
                other = std::uniform_int_distribution<int>(0, int(classes.size()) - 1)(rng);
            } while (other == class_id);
            const double r = uniform(rng, 0.08, 0.2) * double(s);
            Pose p{uniform(rng, 0.0, double(s)), uniform(rng, 0.0, double(s)), r,
                   uniform(rng, 0.0, 2 * std::numbers::pi)};
            draw_shape(cv, classes[std::size_t(other)].family, p, classes[std::size_t(other)].texture,
                       uniform(rng, 0.35, 0.5), base, nullptr);
        }

        const double r = uniform(rng, 0.12, 0.36) * double(s);
        const double margin = 0.6 * r;
        Pose p{uniform(rng, margin, double(s) - margin), uniform(rng, margin, double(s) - margin), r,
               uniform(rng, 0.0, 2 * std::numbers::pi)};
        Mask mask(s, s);
        draw_shape(cv, cls.family, p, cls.texture, 1.0, base, &mask);
        const double frac = double(mask.count()) / double(s * s);
        if (frac < 0.03 || frac > 0.6) continue;

        Sample out;
        out.class_id = class_id;
        out.mask = std::move(mask);
        out.image = Image(s, s, channels);
        // per-class tint for 3-channel datasets
        const std::array<double, 3> tint = {1.0 - 0.1 * double(class_id % 3), 1.0 - 0.1 * double((class_id + 1) % 3),
                                            1.0 - 0.1 * double((class_id + 2) % 3)};
        for (std::size_t i = 0; i < s * s; ++i) {
            const double v = cv.value[i] + noise(rng);
            for (std::size_t c = 0; c < channels; ++c) {
                const double tv = channels == 3 ? v * tint[c] : v;
                out.image.pixels[i * channels + c] =
                    static_cast<std::uint8_t>(std::lround(std::clamp(tv, 0.0, 1.0) * 255.0));
            }
        }
        return out;
    }
    throw std::runtime_error("generate_dataset: could not place a '" + cls.class_name + "' within FG bounds");
}

}  // namespace

std::string family_name(ShapeFamily f) { return kFamilyNames[static_cast<std::size_t>(f)]; }

ShapeFamily family_from_name(const std::string& name) {
    for (std::size_t i = 0; i < kFamilyNames.size(); ++i)
        if (name == kFamilyNames[i]) return static_cast<ShapeFamily>(i);
    throw LookupError("unknown shape family '" + name + "'");
}

bool shape_contains(ShapeFamily f, double x, double y) {
    const double ax = std::abs(x), ay = std::abs(y);
    switch (f) {
        case ShapeFamily::Disk:
            return x * x + y * y <= 1.0;
        case ShapeFamily::Square:
            return ax <= 0.8 && ay <= 0.8;
        case ShapeFamily::Triangle:
            return y >= -0.5 && y <= 1.0 - std::sqrt(3.0) * ax;
        case ShapeFamily::Ring: {
            const double r2 = x * x + y * y;
            return r2 <= 1.0 && r2 >= 0.55 * 0.55;
        }
        case ShapeFamily::Cross:
            return (ax <= 0.3 && ay <= 1.0) || (ay <= 0.3 && ax <= 1.0);
        case ShapeFamily::Bar:
            return ax <= 1.0 && ay <= 0.3;
        case ShapeFamily::LShape:
            return (x >= -0.8 && x <= -0.2 && y >= -0.8 && y <= 0.8) || (x >= -0.8 && x <= 0.8 && y >= -0.8 && y <= -0.2);
        case ShapeFamily::Diamond:
            return ax + ay <= 1.0;
        case ShapeFamily::Ellipse:
            return x * x + (y / 0.55) * (y / 0.55) <= 1.0;
        case ShapeFamily::Star: {
            const double r = std::sqrt(x * x + y * y);
            const double theta = std::atan2(y, x);
            return r <= 0.42 + 0.58 * std::pow(0.5 + 0.5 * std::cos(5.0 * theta), 2.0);
        }
        case ShapeFamily::Hexagon:
            return std::max(ax * 0.866 + ay * 0.5, ay) <= 0.9;
        case ShapeFamily::Crescent:
            return x * x + y * y <= 1.0 && (x - 0.45) * (x - 0.45) + y * y > 0.64;
    }
    return false;
}

double texture_value(const Texture& t, double px, double py) {
    const double u = px * std::cos(t.angle) + py * std::sin(t.angle);
    const double v = -px * std::sin(t.angle) + py * std::cos(t.angle);
    const double w = 2.0 * std::numbers::pi / t.period;
    switch (t.kind) {
        case TextureKind::Solid:
            return t.level;
        case TextureKind::Stripes:
            return t.level + t.amplitude * (std::sin(w * u) >= 0 ? 1.0 : -1.0);
        case TextureKind::Checker:
            return t.level + t.amplitude * ((std::sin(w * u) >= 0) == (std::sin(w * v) >= 0) ? 1.0 : -1.0);
        case TextureKind::Dots: {
            const double cu = std::sin(w * u), cv = std::sin(w * v);
            return t.level + t.amplitude * (cu * cv > 0.5 ? 1.0 : -0.5);
        }
    }
    return t.level;
}

std::string split_name(Split s) { return s == Split::Train ? "train" : "test"; }

Split split_from_name(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    throw LookupError("unknown split '" + s + "' (expected train|test)");
}

std::string annotation_name(Annotation a) {
    switch (a) {
        case Annotation::Dense:
            return "dense";
        case Annotation::Scribble:
            return "scribble";
        case Annotation::BBox:
            return "bbox";
    }
    return "dense";
}

Annotation annotation_from_name(const std::string& s) {
    if (s == "dense") return Annotation::Dense;
    if (s == "scribble") return Annotation::Scribble;
    if (s == "bbox") return Annotation::BBox;
    throw LookupError("unknown annotation '" + s + "' (expected dense|scribble|bbox)");
}

const ShapeClass& Dataset::class_by_id(int id) const {
    for (const auto& c : classes)
        if (c.class_id == id) return c;
    throw LookupError("unknown class id " + std::to_string(id));
}

const ShapeClass& Dataset::class_by_name(const std::string& name) const {
    for (const auto& c : classes)
        if (c.class_name == name) return c;
    std::string known;
    for (const auto& c : classes) known += (known.empty() ? "" : ", ") + c.class_name;
    throw LookupError("unknown class '" + name + "' (known: " + known + ")");
}

Dataset generate_dataset(int n_classes, int per_class, int size, std::uint64_t seed, const GenerateOptions& opts) {
    if (n_classes < 4) throw ConfigError("generate_dataset: need at least 4 classes");
    if (std::size_t(n_classes) > kShapeFamilyCount) {
        throw ConfigError("generate_dataset: " + std::to_string(n_classes) + " classes requested but only " +
                          std::to_string(kShapeFamilyCount) + " shape families exist");
    }
    if (per_class < 2) throw ConfigError("generate_dataset: need at least 2 samples per class");
    if (size < 8 || size % 8 != 0) throw ConfigError("generate_dataset: size must be a positive multiple of 8");
    if (opts.channels != 1 && opts.channels != 3) throw ConfigError("generate_dataset: channels must be 1 or 3");

    Dataset ds;
    for (int i = 0; i < n_classes; ++i) {
        ds.classes.push_back({i, kFamilyNames[std::size_t(i)], static_cast<ShapeFamily>(i), class_texture(i)});
    }
    const int n_test = int(std::floor(double(per_class) * opts.test_fraction));
    for (int c = 0; c < n_classes; ++c) {
        for (int k = 0; k < per_class; ++k) {
            std::mt19937_64 rng(splitmix64(seed ^ splitmix64(std::uint64_t(c) * 1000003ull + std::uint64_t(k))));
            Sample s = render_sample(ds.classes, c, size, opts.channels, rng);
            s.split = k >= per_class - n_test ? Split::Test : Split::Train;
            ds.samples.push_back(std::move(s));
        }
    }
    return ds;
}

std::vector<std::size_t> class_pool(const Dataset& ds, int class_id, SamplePool pool) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        if (s.class_id != class_id) continue;
        if (pool == SamplePool::Train && s.split != Split::Train) continue;
        if (pool == SamplePool::Test && s.split != Split::Test) continue;
        idx.push_back(i);
    }
    return idx;
}

EpisodeTask sample_episode_for_class(const Dataset& ds, int class_id, int shots, std::mt19937_64& rng,
                                     SamplePool pool) {
    if (shots < 1) throw SamplingError("sample_episode: shots must be >= 1");
    std::vector<std::size_t> idx = class_pool(ds, class_id, pool);
    if (idx.size() < std::size_t(shots) + 1) {
        throw SamplingError("sample_episode: class " + std::to_string(class_id) + " has " + std::to_string(idx.size()) +
                            " samples, need " + std::to_string(shots + 1));
    }
    // partial Fisher-Yates: first shots+1 entries become a uniform draw without replacement
    for (std::size_t i = 0; i <= std::size_t(shots); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    EpisodeTask task;
    task.class_id = class_id;
    task.class_name = ds.class_by_id(class_id).class_name;
    for (int k = 0; k < shots; ++k) {
        task.support_indices.push_back(idx[std::size_t(k)]);
        task.supports.push_back(ds.samples[idx[std::size_t(k)]]);
    }
    task.query_index = idx[std::size_t(shots)];
    task.query = ds.samples[task.query_index];
    return task;
}

EpisodeTask sample_episode(const Dataset& ds, const std::vector<int>& split_classes, int shots, std::mt19937_64& rng,
                           SamplePool pool) {
    if (split_classes.empty()) throw SamplingError("sample_episode: empty class split");
    std::uniform_int_distribution<std::size_t> pick(0, split_classes.size() - 1);
    return sample_episode_for_class(ds, split_classes[pick(rng)], shots, rng, pool);
}

namespace {

Mask bbox_of(const Mask& m) {
    std::size_t y0 = m.height, y1 = 0, x0 = m.width, x1 = 0;
    for (std::size_t y = 0; y < m.height; ++y)
        for (std::size_t x = 0; x < m.width; ++x)
            if (m.at(y, x)) {
                y0 = std::min(y0, y), y1 = std::max(y1, y);
                x0 = std::min(x0, x), x1 = std::max(x1, x);
            }
    Mask out(m.height, m.width);
    for (std::size_t y = y0; y <= y1; ++y)
        for (std::size_t x = x0; x <= x1; ++x) out.at(y, x) = 1;
    return out;
}

Mask erode(const Mask& m) {
    Mask out(m.height, m.width);
    for (std::size_t y = 0; y < m.height; ++y)
        for (std::size_t x = 0; x < m.width; ++x) {
            if (!m.at(y, x)) continue;
            const bool keep = y > 0 && y + 1 < m.height && x > 0 && x + 1 < m.width && m.at(y - 1, x) &&
                              m.at(y + 1, x) && m.at(y, x - 1) && m.at(y, x + 1);
            out.at(y, x) = keep ? 1 : 0;
        }
    return out;
}

Mask scribble_of(const Mask& m, std::mt19937_64& rng) {
    const std::size_t n = m.count();
    // seed among the deepest pixels (last non-empty erosion)
    Mask core = m;
    for (;;) {
        Mask next = erode(core);
        if (next.count() == 0) break;
        core = std::move(next);
    }
    std::vector<std::size_t> seeds;
    for (std::size_t i = 0; i < core.bits.size(); ++i)
        if (core.bits[i]) seeds.push_back(i);
    std::size_t cur = seeds[std::uniform_int_distribution<std::size_t>(0, seeds.size() - 1)(rng)];

    const std::size_t lo = std::max<std::size_t>(1, std::size_t(std::ceil(0.02 * double(n))));
    const std::size_t hi = std::max<std::size_t>(1, std::size_t(std::floor(0.20 * double(n))));
    const std::size_t target =
        std::clamp<std::size_t>(std::size_t(std::lround(uniform(rng, 0.02, 0.20) * double(n))), lo, std::max(lo, hi));
    const bool thick = std::bernoulli_distribution(0.5)(rng);

    Mask out(m.height, m.width);
    std::size_t covered = 0;
    auto mark = [&](std::size_t i) {
        if (!out.bits[i] && covered < target) {
            out.bits[i] = 1;
            ++covered;
        }
    };
    const int dy[4] = {-1, 1, 0, 0};
    const int dx[4] = {0, 0, -1, 1};
    auto neighbor = [&](std::size_t i, int d, std::size_t& j) {
        const long y = long(i / m.width) + dy[d];
        const long x = long(i % m.width) + dx[d];
        if (y < 0 || x < 0 || y >= long(m.height) || x >= long(m.width)) return false;
        j = std::size_t(y) * m.width + std::size_t(x);
        return m.bits[j] != 0;
    };

    mark(cur);
    int dir = std::uniform_int_distribution<int>(0, 3)(rng);
    const std::size_t max_steps = 100 * target + 100;
    for (std::size_t step = 0; step < max_steps && covered < target; ++step) {
        std::size_t j;
        if (!(std::bernoulli_distribution(0.75)(rng) && neighbor(cur, dir, j))) {
            std::vector<int> options;
            for (int d = 0; d < 4; ++d)
                if (neighbor(cur, d, j)) options.push_back(d);
            if (options.empty()) break;
            dir = options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
            neighbor(cur, dir, j);
        }
        cur = j;
        mark(cur);
        if (thick) {
            // one perpendicular neighbour keeps the stroke 2 px wide
            const int perp = dir < 2 ? 3 : 1;
            if (neighbor(cur, perp, j)) mark(j);
        }
    }
    return out;
}

}  // namespace

Mask degrade_mask(const Mask& mask, Annotation style, std::mt19937_64& rng) {
    if (mask.count() == 0) throw ContractError("degrade_mask: mask has no foreground");
    switch (style) {
        case Annotation::Dense:
            return mask;
        case Annotation::BBox:
            return bbox_of(mask);
        case Annotation::Scribble:
            return scribble_of(mask, rng);
    }
    return mask;
}

Sample random_crop(const Sample& s, double min_scale, std::mt19937_64& rng) {
    const std::size_t h = s.mask.height, w = s.mask.width;
    const std::size_t n = std::min(h, w);
    for (int attempt = 0; attempt < 10; ++attempt) {
        const std::size_t side = std::clamp<std::size_t>(
            std::size_t(std::lround(uniform(rng, min_scale, 1.0) * double(n))), 1, n);
        const std::size_t oy = std::uniform_int_distribution<std::size_t>(0, h - side)(rng);
        const std::size_t ox = std::uniform_int_distribution<std::size_t>(0, w - side)(rng);
        Sample out = s;
        for (std::size_t y = 0; y < h; ++y) {
            const std::size_t sy = oy + y * side / h;
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t sx = ox + x * side / w;
                out.mask.at(y, x) = s.mask.at(sy, sx);
                for (std::size_t c = 0; c < s.image.channels; ++c) out.image.at(y, x, c) = s.image.at(sy, sx, c);
            }
        }
        const std::size_t fg = out.mask.count();
        if (fg > 0 && fg < out.mask.size()) return out;
    }
    return s;
}

}  // namespace pat
