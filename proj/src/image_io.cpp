#include <cctype>
#include <fstream>
#include <iterator>
#include <numeric>

#include "pat/errors.hpp"
#include "pat/image.hpp"

namespace pat {

std::size_t Mask::count() const { return std::accumulate(bits.begin(), bits.end(), std::size_t{0}); }

namespace {

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, "cannot open file");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Cursor {
    const std::string& path;
    const std::vector<char>& buf;
    std::size_t pos = 0;

    void skip_space_and_comments() {
        while (pos < buf.size()) {
            if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
                ++pos;
            } else if (buf[pos] == '#') {
                while (pos < buf.size() && buf[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    }

    std::size_t number(const char* what) {
        skip_space_and_comments();
        const std::size_t start = pos;
        std::size_t v = 0;
        while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
            v = v * 10 + std::size_t(buf[pos] - '0');
            if (v > (1u << 24)) throw ParseError(path, start, std::string(what) + " too large");
            ++pos;
        }
        if (pos == start) throw ParseError(path, start, std::string("expected ") + what);
        return v;
    }
};

Image parse_pnm(const std::string& path, const std::vector<char>& buf) {
    if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6')) {
        throw ParseError(path, 0, "not a binary PGM/PPM (expected P5 or P6)");
    }
    const std::size_t channels = buf[1] == '5' ? 1 : 3;
    Cursor cur{path, buf, 2};
    const std::size_t width = cur.number("width");
    const std::size_t height = cur.number("height");
    const std::size_t maxval = cur.number("maxval");
    if (width == 0 || height == 0) throw ParseError(path, cur.pos, "zero image dimension");
    if (maxval != 255) throw ParseError(path, cur.pos, "unsupported maxval " + std::to_string(maxval));
    if (cur.pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[cur.pos]))) {
        throw ParseError(path, cur.pos, "missing whitespace after header");
    }
    ++cur.pos;
    const std::size_t need = width * height * channels;
    if (buf.size() - cur.pos < need) {
        throw ParseError(path, buf.size(),
                         "truncated pixel data: expected " + std::to_string(need) + " bytes, found " +
                             std::to_string(buf.size() - cur.pos));
    }
    Image img(height, width, channels);
    std::copy_n(buf.begin() + std::ptrdiff_t(cur.pos), need, img.pixels.begin());
    return img;
}

void write_raw(const std::string& path, const char* magic, std::size_t w, std::size_t h,
               const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << magic << '\n' << w << ' ' << h << '\n' << 255 << '\n';
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace

void write_pnm(const std::string& path, const Image& image) {
    if (image.channels != 1 && image.channels != 3) throw ContractError("write_pnm: 1 or 3 channels required");
    write_raw(path, image.channels == 1 ? "P5" : "P6", image.width, image.height, image.pixels);
}

Image read_pnm(const std::string& path) { return parse_pnm(path, slurp(path)); }

void write_mask_pgm(const std::string& path, const Mask& mask) {
    std::vector<std::uint8_t> bytes(mask.bits.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.bits[i] ? 255 : 0;
    write_raw(path, "P5", mask.width, mask.height, bytes);
}

Mask read_mask_pgm(const std::string& path) {
    Image img = read_pnm(path);
    if (img.channels != 1) throw ParseError(path, 1, "mask must be a single-channel PGM");
    Mask m(img.height, img.width);
    for (std::size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = img.pixels[i] ? 1 : 0;
    return m;
}

}  // namespace pat
