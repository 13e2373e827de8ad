#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pat/image.hpp"

namespace pat {

enum class ShapeFamily {
    Disk,
    Square,
    Triangle,
    Ring,
    Cross,
    Bar,
    LShape,
    Diamond,
    Ellipse,
    Star,
    Hexagon,
    Crescent,
};

inline constexpr std::size_t kShapeFamilyCount = 12;

std::string family_name(ShapeFamily f);
ShapeFamily family_from_name(const std::string& name);

// Membership test in the shape's local frame (unit radius, centred at origin).
bool shape_contains(ShapeFamily f, double x, double y);

enum class TextureKind { Solid, Stripes, Checker, Dots };

struct Texture {
    TextureKind kind = TextureKind::Solid;
    double period = 6.0;  // pixels
    double angle = 0.0;   // radians
    double level = 0.8;   // mean intensity
    double amplitude = 0.12;

    bool operator==(const Texture&) const = default;
};

double texture_value(const Texture& t, double px, double py);

struct ShapeClass {
    int class_id = 0;
    std::string class_name;
    ShapeFamily family = ShapeFamily::Disk;
    Texture texture;

    bool operator==(const ShapeClass&) const = default;
};

enum class Split { Train, Test };
std::string split_name(Split s);
Split split_from_name(const std::string& s);

struct Sample {
    Image image;
    Mask mask;
    int class_id = 0;
    Split split = Split::Train;

    bool operator==(const Sample&) const = default;
};

struct Dataset {
    std::vector<ShapeClass> classes;
    std::vector<Sample> samples;

    const ShapeClass& class_by_id(int id) const;
    const ShapeClass& class_by_name(const std::string& name) const;
    bool operator==(const Dataset&) const = default;
};

struct GenerateOptions {
    std::size_t channels = 1;
    double test_fraction = 0.25;  // tail of each class marked Split::Test
};

// Deterministic synthetic dataset: one shape family per class with a class
// texture, random pose, and low-contrast clutter drawn from other families.
Dataset generate_dataset(int n_classes, int per_class, int size, std::uint64_t seed, const GenerateOptions& opts = {});

enum class Annotation { Dense, Scribble, BBox };
std::string annotation_name(Annotation a);
Annotation annotation_from_name(const std::string& s);

struct EpisodeTask {
    std::vector<Sample> supports;
    Sample query;
    std::vector<std::size_t> support_indices;  // into Dataset::samples
    std::size_t query_index = 0;
    int class_id = 0;
    std::string class_name;
    Annotation annotation = Annotation::Dense;
};

enum class SamplePool { All, Train, Test };

// Indices of samples of `class_id` that belong to `pool`.
std::vector<std::size_t> class_pool(const Dataset& ds, int class_id, SamplePool pool);

// Uniform class from `split_classes`, then shots+1 distinct samples of that class.
EpisodeTask sample_episode(const Dataset& ds, const std::vector<int>& split_classes, int shots, std::mt19937_64& rng,
                           SamplePool pool = SamplePool::All);
// Same, with the class fixed.
EpisodeTask sample_episode_for_class(const Dataset& ds, int class_id, int shots, std::mt19937_64& rng,
                                     SamplePool pool = SamplePool::All);

// bbox: filled tight box around FG (superset). scribble: connected 1-2 px
// random walk inside FG covering 2-20% of it (subset).
Mask degrade_mask(const Mask& mask, Annotation style, std::mt19937_64& rng);

// Square random crop resized back to the original size (nearest). Image and
// mask get the same crop; retries until FG and BG both survive, otherwise
// returns the sample unchanged.
Sample random_crop(const Sample& s, double min_scale, std::mt19937_64& rng);

}  // namespace pat
