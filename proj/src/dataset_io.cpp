#include "pat/dataset_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "pat/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pat {

namespace {

std::string index_name(std::size_t i) {
    std::ostringstream os;
    os.width(5);
    os.fill('0');
    os << i;
    return os.str();
}

const char* texture_kind_name(TextureKind k) {
    switch (k) {
        case TextureKind::Solid:
            return "solid";
        case TextureKind::Stripes:
            return "stripes";
        case TextureKind::Checker:
            return "checker";
        case TextureKind::Dots:
            return "dots";
    }
    return "solid";
}

TextureKind texture_kind_from(const std::string& s) {
    if (s == "solid") return TextureKind::Solid;
    if (s == "stripes") return TextureKind::Stripes;
    if (s == "checker") return TextureKind::Checker;
    if (s == "dots") return TextureKind::Dots;
    throw LookupError("unknown texture kind '" + s + "'");
}

}  // namespace

void write_dataset(const std::string& dir, const Dataset& ds) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    std::ofstream manifest(fs::path(dir) / "manifest.jsonl");
    if (!manifest) throw std::runtime_error("cannot write manifest in " + dir);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        const std::string ext = s.image.channels == 3 ? ".ppm" : ".pgm";
        const std::string image_rel = "images/" + index_name(i) + ext;
        const std::string mask_rel = "masks/" + index_name(i) + ".pgm";
        write_pnm((fs::path(dir) / image_rel).string(), s.image);
        write_mask_pgm((fs::path(dir) / mask_rel).string(), s.mask);
        json line = {{"image", image_rel},
                     {"mask", mask_rel},
                     {"class_id", s.class_id},
                     {"class_name", ds.class_by_id(s.class_id).class_name},
                     {"split", split_name(s.split)}};
        manifest << line.dump() << '\n';
    }
    json classes = json::array();
    for (const auto& c : ds.classes) {
        classes.push_back({{"class_id", c.class_id},
                           {"class_name", c.class_name},
                           {"family", family_name(c.family)},
                           {"texture",
                            {{"kind", texture_kind_name(c.texture.kind)},
                             {"period", c.texture.period},
                             {"angle", c.texture.angle},
                             {"level", c.texture.level},
                             {"amplitude", c.texture.amplitude}}}});
    }
    std::ofstream(fs::path(dir) / "classes.json") << classes.dump(2) << '\n';
}

Dataset read_dataset(const std::string& dir) {
    const fs::path manifest_path = fs::path(dir) / "manifest.jsonl";
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw ParseError(manifest_path.string(), 0, "manifest not found");

    Dataset ds;
    std::map<int, std::string> names;
    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        const std::size_t line_start = offset;
        offset += line.size() + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(manifest_path.string(), line_start + (e.byte > 0 ? e.byte - 1 : 0), e.what());
        }
        Sample s;
        std::string class_name;
        try {
            s.class_id = j.at("class_id").get<int>();
            class_name = j.at("class_name").get<std::string>();
            s.split = split_from_name(j.at("split").get<std::string>());
            s.image = read_pnm((fs::path(dir) / j.at("image").get<std::string>()).string());
            s.mask = read_mask_pgm((fs::path(dir) / j.at("mask").get<std::string>()).string());
        } catch (const json::exception& e) {
            throw ParseError(manifest_path.string(), line_start, std::string("bad manifest entry: ") + e.what());
        } catch (const LookupError& e) {
            throw ParseError(manifest_path.string(), line_start, e.what());
        }
        if (s.image.height != s.mask.height || s.image.width != s.mask.width) {
            throw ValidationError("sample at manifest offset " + std::to_string(line_start) +
                                  ": image and mask sizes differ");
        }
        auto [it, inserted] = names.emplace(s.class_id, class_name);
        if (!inserted && it->second != class_name) {
            throw ValidationError("class_id " + std::to_string(s.class_id) + " has names '" + it->second + "' and '" +
                                  class_name + "'");
        }
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw ValidationError("manifest " + manifest_path.string() + " lists no samples");

    // class ids must be dense from 0
    const int max_id = names.rbegin()->first;
    std::vector<int> missing;
    for (int id = 0; id <= max_id; ++id)
        if (!names.count(id)) missing.push_back(id);
    if (names.begin()->first < 0) throw ValidationError("negative class_id in manifest");
    if (!missing.empty()) {
        std::string list;
        for (int id : missing) list += (list.empty() ? "" : ", ") + std::to_string(id);
        throw ValidationError("manifest class ids are not dense; missing: " + list);
    }
    std::set<std::string> seen_names;
    for (const auto& [id, name] : names) {
        if (!seen_names.insert(name).second) throw ValidationError("class name '" + name + "' used by several ids");
    }

    std::map<int, ShapeClass> meta;
    const fs::path classes_path = fs::path(dir) / "classes.json";
    if (fs::exists(classes_path)) {
        std::ifstream cin(classes_path);
        json cj;
        try {
            cj = json::parse(cin);
            for (const auto& c : cj) {
                ShapeClass sc;
                sc.class_id = c.at("class_id").get<int>();
                sc.class_name = c.at("class_name").get<std::string>();
                sc.family = family_from_name(c.at("family").get<std::string>());
                const auto& t = c.at("texture");
                sc.texture.kind = texture_kind_from(t.at("kind").get<std::string>());
                sc.texture.period = t.at("period").get<double>();
                sc.texture.angle = t.at("angle").get<double>();
                sc.texture.level = t.at("level").get<double>();
                sc.texture.amplitude = t.at("amplitude").get<double>();
                meta[sc.class_id] = sc;
            }
        } catch (const json::parse_error& e) {
            throw ParseError(classes_path.string(), e.byte, e.what());
        } catch (const std::exception& e) {
            throw ParseError(classes_path.string(), 0, e.what());
        }
    }
    for (const auto& [id, name] : names) {
        ShapeClass sc;
        if (auto it = meta.find(id); it != meta.end() && it->second.class_name == name) {
            sc = it->second;
        } else {
            sc.class_id = id;
            sc.class_name = name;
        }
        ds.classes.push_back(sc);
    }
    return ds;
}

}  // namespace pat
