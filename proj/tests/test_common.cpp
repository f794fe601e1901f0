#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "minesched/common.hpp"

using namespace minesched;

TEST_CASE("make_rng streams are deterministic and distinct") {
    auto a1 = make_rng(42, 0);
    auto a2 = make_rng(42, 0);
    auto b = make_rng(42, 1);
    auto c = make_rng(43, 0);
    CHECK(a1() == a2());
    CHECK(a1() != b());
    CHECK(a1() != c());
}

TEST_CASE("fnv1a64 matches reference values") {
    // Published FNV-1a test vectors.
    CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ull);
    CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cull);
    CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ull);
}

TEST_CASE("hex64 formats fixed width") {
    CHECK(hex64(0) == "0000000000000000");
    CHECK(hex64(0xdeadbeefull) == "00000000deadbeef");
}

TEST_CASE("quantile_sorted interpolates linearly") {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    CHECK(quantile_sorted(v, 0.5) == doctest::Approx(2.5));
    CHECK(quantile_sorted(v, 0.25) == doctest::Approx(1.75));
    std::vector<double> one{7.0};
    CHECK(quantile_sorted(one, 0.9) == doctest::Approx(7.0));
    CHECK_THROWS_AS(quantile_sorted(std::vector<double>{}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(quantile_sorted(v, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(quantile_sorted(v, 1.0), std::invalid_argument);
}

TEST_CASE("quantiles sorts its input first") {
    std::vector<double> v{4.0, 1.0, 3.0, 2.0};
    auto q = quantiles(v, std::vector<double>{0.1, 0.5, 0.9});
    CHECK(q[0] == doctest::Approx(1.3));
    CHECK(q[1] == doctest::Approx(2.5));
    CHECK(q[2] == doctest::Approx(3.7));
}

TEST_CASE("base64 round trip") {
    // RFC 4648 test vectors.
    auto enc = [](const std::string& s) {
        return base64_encode(std::span<const unsigned char>(
            reinterpret_cast<const unsigned char*>(s.data()), s.size()));
    };
    CHECK(enc("") == "");
    CHECK(enc("f") == "Zg==");
    CHECK(enc("fo") == "Zm8=");
    CHECK(enc("foo") == "Zm9v");
    CHECK(enc("foob") == "Zm9vYg==");
    CHECK(enc("fooba") == "Zm9vYmE=");
    CHECK(enc("foobar") == "Zm9vYmFy");
    auto back = base64_decode("Zm9vYmFy");
    CHECK(std::string(back.begin(), back.end()) == "foobar");
}

TEST_CASE("encode_doubles is bit-exact") {
    std::vector<double> v{0.0, -1.5, 3.141592653589793, 1e-308, -0.0, 1.0 / 3.0};
    auto text = encode_doubles(v);
    auto back = decode_doubles(text);
    REQUIRE(back.size() == v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        CHECK(std::memcmp(&back[i], &v[i], sizeof(double)) == 0);
    }
}

TEST_CASE("file helpers round trip and create parents") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "minesched_test_common";
    fs::remove_all(dir);
    const auto path = (dir / "a" / "b.txt").string();
    CHECK_FALSE(file_exists(path));
    write_file(path, "hello");
    CHECK(file_exists(path));
    CHECK(read_file(path) == "hello");
    CHECK(file_hash(path) == fnv1a64("hello", 5));
    fs::remove_all(dir);
}
