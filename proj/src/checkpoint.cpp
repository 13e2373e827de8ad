#include "pat/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "pat/errors.hpp"

namespace pat {
inline namespace PAT_ABI {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'T', 'C', 'K', 'P', 'T', '1'};
using Kind = CheckpointError::Kind;

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
}

void put_f32(std::string& out, float f) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(char((u >> (8 * i)) & 0xff));
}

float get_f32(const unsigned char* p) {
    std::uint32_t u = 0;
    for (int i = 0; i < 4; ++i) u |= std::uint32_t(p[i]) << (8 * i);
    return std::bit_cast<float>(u);
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store) {
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& e : store.entries()) manifest.push_back({{"name", e.name}, {"shape", e.tensor.shape()}});
    const std::string text = manifest.dump();
    std::string blob(kMagic, kMagic + 8);
    put_u64(blob, text.size());
    blob += text;
    for (const auto& e : store.entries())
        for (Scalar v : e.tensor.data()) put_f32(blob, float(v));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError(Kind::Io, "cannot write checkpoint " + path);
    out.write(blob.data(), std::streamsize(blob.size()));
    if (!out) throw CheckpointError(Kind::Io, "write failed for " + path);
}

void load_checkpoint(const std::string& path, ParamStore& store) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(Kind::Io, "cannot open checkpoint " + path);
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 8) != 0) {
        throw CheckpointError(Kind::Magic, path + ": not a PATCKPT1 checkpoint");
    }
    if (buf.size() < 16) throw CheckpointError(Kind::Truncated, path + ": truncated header");
    const std::uint64_t len = get_u64(buf.data() + 8);
    if (len > buf.size() - 16) throw CheckpointError(Kind::Truncated, path + ": truncated manifest");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(buf.begin() + 16, buf.begin() + 16 + std::ptrdiff_t(len));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(Kind::Manifest, path + ": bad manifest: " + e.what());
    }
    if (!manifest.is_array()) throw CheckpointError(Kind::Manifest, path + ": manifest is not an array");

    struct Entry {
        std::string name;
        Shape shape;
    };
    std::vector<Entry> entries;
    try {
        for (const auto& j : manifest) entries.push_back({j.at("name").get<std::string>(), j.at("shape").get<Shape>()});
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(Kind::Manifest, path + ": bad manifest entry: " + e.what());
    }

    for (const auto& e : store.entries()) {
        auto it = std::find_if(entries.begin(), entries.end(), [&](const Entry& m) { return m.name == e.name; });
        if (it == entries.end()) throw CheckpointError(Kind::Missing, path + ": no tensor named '" + e.name + "'");
        if (it->shape != e.tensor.shape()) {
            throw CheckpointError(Kind::Shape, path + ": tensor '" + e.name + "' has shape " + shape_str(it->shape) +
                                                   ", model expects " + shape_str(e.tensor.shape()));
        }
    }
    if (entries.size() != store.size()) {
        throw CheckpointError(Kind::Manifest, path + ": checkpoint has " + std::to_string(entries.size()) +
                                                  " tensors, model has " + std::to_string(store.size()));
    }

    std::size_t total = 0;
    std::vector<std::size_t> offsets;
    for (const auto& m : entries) {
        offsets.push_back(total);
        total += shape_numel(m.shape);
    }
    const std::size_t payload = 16 + len;
    if (buf.size() - payload < total * 4) throw CheckpointError(Kind::Truncated, path + ": truncated payload");
    if (buf.size() - payload > total * 4) throw CheckpointError(Kind::Manifest, path + ": trailing bytes after payload");

    std::vector<std::vector<Scalar>> staged;
    for (const auto& e : store.entries()) {
        std::size_t i = 0;
        while (entries[i].name != e.name) ++i;
        const unsigned char* p = buf.data() + payload + offsets[i] * 4;
        std::vector<Scalar> v(e.tensor.numel());
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = Scalar(get_f32(p + 4 * j));
        staged.push_back(std::move(v));
    }
    for (std::size_t i = 0; i < store.size(); ++i) {
        auto dst = store.entries()[i].tensor;
        std::copy(staged[i].begin(), staged[i].end(), dst.data().begin());
    }
}

}  // namespace PAT_ABI
}  // namespace pat
