#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "crowdscan/error.hpp"
#include "crowdscan/image.hpp"

namespace crowdscan {

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    in.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw Error(Errc::IoError, "short read on " + path.string());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              std::streamsize(bytes.size()));
    if (!out) throw Error(Errc::IoError, "short write on " + path.string());
}

inline float byte_to_unit(std::uint8_t b) { return float(b) / 255.0f; }
inline std::uint8_t unit_to_byte(float v) {
    return std::uint8_t(std::clamp(int(v * 255.0f + 0.5f), 0, 255));
}

} // namespace detail

// --- PGM / PPM ---------------------------------------------------------------

inline void save_pgm(const std::filesystem::path& path, const Frame& f) {
    const Frame g = to_gray(f);
    std::string header = "P5\n" + std::to_string(g.width) + " " +
                         std::to_string(g.height) + "\n255\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    bytes.reserve(bytes.size() + g.pixels.size());
    for (float v : g.pixels) bytes.push_back(detail::unit_to_byte(v));
    detail::write_file_bytes(path, bytes);
}

inline Frame load_pnm(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    std::size_t pos = 0;
    auto next_token = [&]() -> std::string {
        while (pos < bytes.size()) {
            if (std::isspace(bytes[pos])) { ++pos; continue; }
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
                continue;
            }
            break;
        }
        std::string tok;
        while (pos < bytes.size() && !std::isspace(bytes[pos]))
            tok.push_back(char(bytes[pos++]));
        return tok;
    };

    const std::string magic = next_token();
    if (magic != "P5" && magic != "P6")
        throw Error(Errc::IoError, "unsupported PNM magic in " + path.string());
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw Error(Errc::IoError, "unsupported PNM header in " + path.string());
    ++pos;  // single whitespace after maxval

    const int channels = magic == "P5" ? 1 : 3;
    const std::size_t need = std::size_t(w) * h * channels;
    if (bytes.size() - pos < need)
        throw Error(Errc::IoError, "truncated PNM data in " + path.string());

    Frame f;
    f.width = w;
    f.height = h;
    f.channels = channels;
    f.pixels.resize(need);
    for (std::size_t i = 0; i < need; ++i)
        f.pixels[i] = float(bytes[pos + i]) / float(maxval);
    return f;
}

// --- PNG ---------------------------------------------------------------------
// 8-bit, non-interlaced. Reader handles color types 0 (gray), 2 (RGB),
// 3 (palette), 4 (gray+alpha), 6 (RGBA); alpha is dropped. Writer emits
// gray or RGB with filter type 0 and zlib default compression.

namespace detail {

inline void push_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(std::uint8_t(x >> 24));
    v.push_back(std::uint8_t(x >> 16));
    v.push_back(std::uint8_t(x >> 8));
    v.push_back(std::uint8_t(x));
}

inline std::uint32_t read_u32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void push_chunk(std::vector<std::uint8_t>& out, const char type[5],
                       const std::vector<std::uint8_t>& data) {
    push_u32(out, std::uint32_t(data.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const std::uint32_t crc = std::uint32_t(
        ::crc32(0, out.data() + crc_start, uInt(out.size() - crc_start)));
    push_u32(out, crc);
}

} // namespace detail

inline void save_png(const std::filesystem::path& path, const Frame& f) {
    if (f.channels != 1 && f.channels != 3)
        throw Error(Errc::IoError, "png writer expects gray or RGB");
    const int bpp = f.channels;

    // raw scanlines with filter byte 0
    std::vector<std::uint8_t> raw;
    raw.reserve(std::size_t(f.height) * (std::size_t(f.width) * bpp + 1));
    for (int y = 0; y < f.height; ++y) {
        raw.push_back(0);
        for (int x = 0; x < f.width; ++x)
            for (int c = 0; c < bpp; ++c)
                raw.push_back(detail::unit_to_byte(f.at(x, y, c)));
    }

    uLongf comp_size = ::compressBound(uLong(raw.size()));
    std::vector<std::uint8_t> comp(comp_size);
    if (::compress2(comp.data(), &comp_size, raw.data(), uLong(raw.size()), 6) != Z_OK)
        throw Error(Errc::Internal, "zlib compress failed");
    comp.resize(comp_size);

    std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<std::uint8_t> ihdr;
    detail::push_u32(ihdr, std::uint32_t(f.width));
    detail::push_u32(ihdr, std::uint32_t(f.height));
    ihdr.push_back(8);                       // bit depth
    ihdr.push_back(bpp == 1 ? 0 : 2);        // color type
    ihdr.push_back(0);                       // compression
    ihdr.push_back(0);                       // filter
    ihdr.push_back(0);                       // interlace
    detail::push_chunk(out, "IHDR", ihdr);
    detail::push_chunk(out, "IDAT", comp);
    detail::push_chunk(out, "IEND", {});
    detail::write_file_bytes(path, out);
}

inline Frame load_png(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw Error(Errc::IoError, "not a PNG file: " + path.string());

    int w = 0, h = 0, bit_depth = 0, color_type = 0, interlace = 0;
    std::vector<std::uint8_t> idat;
    std::vector<std::uint8_t> palette;  // rgb triples

    std::size_t pos = 8;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = detail::read_u32(&bytes[pos]);
        if (pos + 12 + len > bytes.size())
            throw Error(Errc::IoError, "truncated PNG chunk in " + path.string());
        const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
        const std::uint8_t* data = &bytes[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            w = int(detail::read_u32(data));
            h = int(detail::read_u32(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            interlace = data[12];
        } else if (std::memcmp(type, "PLTE", 4) == 0) {
            palette.assign(data, data + len);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0 || idat.empty())
        throw Error(Errc::IoError, "malformed PNG: " + path.string());
    if (bit_depth != 8 || interlace != 0)
        throw Error(Errc::IoError,
                    "unsupported PNG (need 8-bit non-interlaced): " + path.string());

    int src_ch;
    switch (color_type) {
    case 0: src_ch = 1; break;
    case 2: src_ch = 3; break;
    case 3: src_ch = 1; break;
    case 4: src_ch = 2; break;
    case 6: src_ch = 4; break;
    default:
        throw Error(Errc::IoError, "unsupported PNG color type: " + path.string());
    }

    const std::size_t stride = std::size_t(w) * src_ch;
    std::vector<std::uint8_t> raw(std::size_t(h) * (stride + 1));
    uLongf raw_size = uLongf(raw.size());
    if (::uncompress(raw.data(), &raw_size, idat.data(), uLong(idat.size())) != Z_OK ||
        raw_size != raw.size())
        throw Error(Errc::IoError, "PNG inflate failed: " + path.string());

    // undo per-scanline filters in place
    std::vector<std::uint8_t> prev(stride, 0);
    std::vector<std::uint8_t> line(stride);
    const int out_ch = (color_type == 2 || color_type == 3 || color_type == 6) ? 3 : 1;
    Frame f = out_ch == 1 ? Frame::gray(w, h) : Frame::rgb(w, h);

    for (int y = 0; y < h; ++y) {
        const std::uint8_t* src = &raw[std::size_t(y) * (stride + 1)];
        const int filter = src[0];
        const std::uint8_t* cur = src + 1;
        for (std::size_t i = 0; i < stride; ++i) {
            const int a = i >= std::size_t(src_ch) ? line[i - src_ch] : 0;
            const int b = prev[i];
            const int c = i >= std::size_t(src_ch) ? prev[i - src_ch] : 0;
            int x = cur[i];
            switch (filter) {
            case 0: break;
            case 1: x += a; break;
            case 2: x += b; break;
            case 3: x += (a + b) / 2; break;
            case 4: {
                const int p = a + b - c;
                const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
                x += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                break;
            }
            default:
                throw Error(Errc::IoError, "bad PNG filter type: " + path.string());
            }
            line[i] = std::uint8_t(x & 0xff);
        }
        prev = line;

        for (int x = 0; x < w; ++x) {
            const std::uint8_t* px = &line[std::size_t(x) * src_ch];
            switch (color_type) {
            case 0:
                f.at(x, y) = detail::byte_to_unit(px[0]);
                break;
            case 4:
                f.at(x, y) = detail::byte_to_unit(px[0]);
                break;
            case 2:
            case 6:
                for (int c = 0; c < 3; ++c)
                    f.at(x, y, c) = detail::byte_to_unit(px[c]);
                break;
            case 3: {
                const std::size_t idx = std::size_t(px[0]) * 3;
                if (idx + 2 >= palette.size())
                    throw Error(Errc::IoError, "PNG palette index out of range");
                for (int c = 0; c < 3; ++c)
                    f.at(x, y, c) = detail::byte_to_unit(palette[idx + c]);
                break;
            }
            }
        }
    }
    return f;
}

// --- generic entry points ----------------------------------------------------

inline Frame load_image(const std::filesystem::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".png" || ext == ".PNG") return load_png(path);
    if (ext == ".pgm" || ext == ".ppm" || ext == ".PGM" || ext == ".PPM")
        return load_pnm(path);
    throw Error(Errc::IoError, "unsupported image extension: " + path.string());
}

inline void save_image(const std::filesystem::path& path, const Frame& f) {
    const std::string ext = path.extension().string();
    if (ext == ".png" || ext == ".PNG") { save_png(path, f); return; }
    if (ext == ".pgm" || ext == ".PGM") { save_pgm(path, f); return; }
    throw Error(Errc::IoError, "unsupported image extension: " + path.string());
}

/// Lists frame files in a directory, lexicographic order = temporal order.
inline std::vector<std::filesystem::path> list_frame_files(
    const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir))
        throw Error(Errc::NoFrames, "input directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string ext = e.path().extension().string();
        if (ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".PNG" ||
            ext == ".PGM" || ext == ".PPM")
            files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty())
        throw Error(Errc::NoFrames, "no frame files in " + dir.string());
    return files;
}

/// Loads a frame sequence as grayscale with timestamps 0..n-1.
inline std::vector<Frame> load_frame_sequence(const std::filesystem::path& dir) {
    const auto files = list_frame_files(dir);
    std::vector<Frame> frames;
    frames.reserve(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) {
        Frame f = to_gray(load_image(files[i]));
        f.timestamp = std::int64_t(i);
        frames.push_back(std::move(f));
    }
    return frames;
}

} // namespace crowdscan
