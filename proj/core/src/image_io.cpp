#include "kao/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "kao/errors.hpp"

namespace kao {

uint8_t quantize_unit(float v, int64_t* clamped) {
    double x = v;
    if (x < -1.0 || x > 1.0) {
        if (clamped) ++*clamped;
        x = std::clamp(x, -1.0, 1.0);
    }
    const double scaled = (x + 1.0) * 0.5 * 255.0;
    // round half away from zero; scaled >= 0 so this is floor(x + 0.5)
    return static_cast<uint8_t>(std::floor(scaled + 0.5));
}

int64_t write_image(const Grid& g, const std::string& path) {
    if (g.rank() != 3) throw DomainError("write_image: expected [C,H,W]");
    const int64_t c = g.extent(0), h = g.extent(1), w = g.extent(2);
    if (c != 1 && c != 3) throw DomainError("write_image: channels must be 1 or 3");

    int64_t clamped = 0;
    std::vector<uint8_t> payload(static_cast<size_t>(c * h * w));
    // interleave channels row-major
    size_t k = 0;
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t ci = 0; ci < c; ++ci) payload[k++] = quantize_unit(g.at(ci, y, x), &clamped);

    const std::string tmp = path + ".tmp";
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw DataError("write_image: cannot open " + tmp);
    std::fprintf(f, "%s\n%lld %lld\n255\n", c == 1 ? "P5" : "P6",
                 static_cast<long long>(w), static_cast<long long>(h));
    if (std::fwrite(payload.data(), 1, payload.size(), f) != payload.size()) {
        std::fclose(f);
        throw DataError("write_image: short write to " + tmp);
    }
    std::fclose(f);
    std::filesystem::rename(tmp, path);
    return clamped;
}

namespace {

int64_t read_token(std::FILE* f, const std::string& path) {
    int ch = std::fgetc(f);
    while (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r') ch = std::fgetc(f);
    int64_t v = 0;
    bool any = false;
    while (ch >= '0' && ch <= '9') {
        v = v * 10 + (ch - '0');
        any = true;
        ch = std::fgetc(f);
    }
    if (!any) throw DataError("read_image: malformed header in " + path);
    return v;
}

}  // namespace

Grid read_image(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("read_image: cannot open " + path);
    char magic[3] = {};
    if (std::fread(magic, 1, 2, f) != 2 || magic[0] != 'P' ||
        (magic[1] != '5' && magic[1] != '6')) {
        std::fclose(f);
        throw DataError("read_image: not a P5/P6 file: " + path);
    }
    const int64_t c = magic[1] == '5' ? 1 : 3;
    int64_t w, h, maxval;
    try {
        w = read_token(f, path);
        h = read_token(f, path);
        maxval = read_token(f, path);
    } catch (...) {
        std::fclose(f);
        throw;
    }
    // read_token consumed exactly one whitespace byte after maxval, so the
    // stream now points at the first payload byte
    if (maxval != 255 || w < 1 || h < 1) {
        std::fclose(f);
        throw DataError("read_image: unsupported header in " + path);
    }
    std::vector<uint8_t> payload(static_cast<size_t>(c * h * w));
    if (std::fread(payload.data(), 1, payload.size(), f) != payload.size()) {
        std::fclose(f);
        throw DataError("read_image: truncated payload in " + path);
    }
    std::fclose(f);

    Grid g({c, h, w});
    size_t k = 0;
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t ci = 0; ci < c; ++ci)
                g.at(ci, y, x) =
                    static_cast<float>(static_cast<double>(payload[k++]) / 255.0 * 2.0 - 1.0);
    return g;
}

}  // namespace kao
