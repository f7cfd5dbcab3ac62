#include <catch2/catch.hpp>

#include <filesystem>

#include "crowdscan/counting.hpp"
#include "crowdscan/image_io.hpp"
#include "crowdscan/rng.hpp"

using namespace crowdscan;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Frame random_frame(int w, int h, int channels, std::uint64_t seed) {
    Frame f = channels == 1 ? Frame::gray(w, h) : Frame::rgb(w, h);
    Rng rng(seed);
    for (auto& v : f.pixels) v = float(rng.uniform());
    return f;
}

// round trips go through 8-bit quantization
void check_quantized_equal(const Frame& a, const Frame& b) {
    REQUIRE(a.width == b.width);
    REQUIRE(a.height == b.height);
    REQUIRE(a.channels == b.channels);
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const float quantized = float(int(a.pixels[i] * 255.0f + 0.5f)) / 255.0f;
        REQUIRE(b.pixels[i] == Approx(quantized).margin(1e-6));
    }
}

} // namespace

TEST_CASE("png round trip, gray and rgb") {
    const auto dir = temp_dir("crowdscan_io_png");
    for (int channels : {1, 3}) {
        const Frame f = random_frame(37, 23, channels, 100 + channels);
        const auto path = dir / ("rt" + std::to_string(channels) + ".png");
        save_png(path, f);
        const Frame back = load_png(path);
        check_quantized_equal(f, back);
    }
    fs::remove_all(dir);
}

TEST_CASE("pgm round trip") {
    const auto dir = temp_dir("crowdscan_io_pgm");
    const Frame f = random_frame(17, 11, 1, 7);
    save_pgm(dir / "rt.pgm", f);
    const Frame back = load_pnm(dir / "rt.pgm");
    check_quantized_equal(f, back);
    fs::remove_all(dir);
}

TEST_CASE("load_image rejects unknown extensions and bad files") {
    const auto dir = temp_dir("crowdscan_io_bad");
    CHECK_THROWS_AS(load_image(dir / "missing.png"), Error);
    CHECK_THROWS_AS(load_image(dir / "note.txt"), Error);
    {
        std::ofstream out(dir / "fake.png", std::ios::binary);
        out << "not a png at all";
    }
    CHECK_THROWS_AS(load_png(dir / "fake.png"), Error);
    fs::remove_all(dir);
}

TEST_CASE("frame sequences load in lexicographic order as grayscale") {
    const auto dir = temp_dir("crowdscan_io_seq");
    for (int i : {2, 0, 1}) {
        Frame f = Frame::gray(8, 8, float(i) / 4.0f);
        char name[32];
        std::snprintf(name, sizeof name, "frame_%06d.pgm", i);
        save_pgm(dir / name, f);
    }
    const auto frames = load_frame_sequence(dir);
    REQUIRE(frames.size() == 3);
    CHECK(frames[0].at(0, 0) == Approx(0.0).margin(3e-3));
    CHECK(frames[1].at(0, 0) == Approx(0.25).margin(3e-3));
    CHECK(frames[2].at(0, 0) == Approx(0.5).margin(3e-3));
    CHECK(frames[0].timestamp == 0);
    CHECK(frames[2].timestamp == 2);

    fs::remove_all(dir);
    CHECK_THROWS_MATCHES(load_frame_sequence(dir), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == Errc::NoFrames;
                         }));
}

TEST_CASE("to_gray uses the documented luma weights") {
    Frame f = Frame::rgb(1, 1);
    f.at(0, 0, 0) = 1.0f;
    f.at(0, 0, 1) = 0.5f;
    f.at(0, 0, 2) = 0.25f;
    const Frame g = to_gray(f);
    CHECK(g.at(0, 0) == Approx(0.299 * 1.0 + 0.587 * 0.5 + 0.114 * 0.25).margin(1e-6));
}

TEST_CASE("CRM1 response files round trip bit-exactly") {
    const auto dir = temp_dir("crowdscan_io_crm");
    ResponseMap r;
    r.width = 13;
    r.height = 9;
    r.stride = 3;
    Rng rng(55);
    r.values.resize(std::size_t(r.width) * r.height);
    for (auto& v : r.values) v = float(rng.uniform());

    save_response(dir / "resp.crm", r);
    const ResponseMap back = load_response(dir / "resp.crm");
    REQUIRE(back.width == r.width);
    REQUIRE(back.height == r.height);
    REQUIRE(back.stride == r.stride);
    for (std::size_t i = 0; i < r.values.size(); ++i)
        REQUIRE(back.values[i] == r.values[i]);

    // PGM acceptance: values/255 with caller-supplied stride
    Frame f = Frame::gray(6, 4, 0.5f);
    save_pgm(dir / "resp.pgm", f);
    const ResponseMap pgm = load_response(dir / "resp.pgm", 3);
    CHECK(pgm.stride == 3);
    CHECK(pgm.width == 6);
    CHECK(pgm.values[0] == Approx(0.5).margin(1e-2));

    {
        std::ofstream out(dir / "trunc.crm", std::ios::binary);
        out << "CRM1xxxx";
    }
    CHECK_THROWS_AS(load_response(dir / "trunc.crm"), Error);
    fs::remove_all(dir);
}
