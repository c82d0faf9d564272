#include <doctest.h>

#include <cstdint>
#include <fstream>
#include <random>
#include <vector>

#include "emoedit/archive.hpp"
#include "emoedit/error.hpp"
#include "emoedit/hash.hpp"
#include "emoedit/image.hpp"
#include "helpers.hpp"

using namespace emoedit;

TEST_SUITE("archive") {
  TEST_CASE("save and load are bit exact") {
    testing::TempDir tmp("archive");
    std::mt19937_64 rng(1);
    Archive a;
    a.meta["kind"] = "thing";
    a.meta["version"] = 2;
    const Eigen::MatrixXd m = testing::gaussian(5, 3, rng);
    const Eigen::VectorXd v = testing::gaussian(7, 1, rng);
    const std::vector<std::int64_t> ints{-3, 0, 1ll << 40};
    const std::vector<float> floats{0.5f, -1.25f, 3.0f, 1e-7f};
    a.put("m", m);
    a.put("v", v);
    a.put("i", ints);
    a.put("f", floats, {2, 2});
    a.save(tmp.path / "a.emo");
    const Archive b = Archive::load(tmp.path / "a.emo");
    CHECK(b.meta == a.meta);
    CHECK(b.matrix("m") == m);
    CHECK(b.vector("v") == v);
    CHECK(b.ints("i") == ints);
    CHECK(b.floats("f") == floats);
    CHECK(b.entry("f").shape == std::vector<std::uint64_t>{2, 2});
    CHECK(b.to_bytes() == a.to_bytes());
  }

  TEST_CASE("kind and version are enforced") {
    Archive a;
    a.meta["kind"] = "basis";
    a.meta["version"] = 1;
    CHECK_NOTHROW(require_kind(a, "basis", 1));
    CHECK_THROWS_AS(require_kind(a, "texture_model", 1), ModelMismatch);
    CHECK_THROWS_AS(require_kind(a, "basis", 2), ModelMismatch);
  }

  TEST_CASE("corrupt files raise DataError") {
    testing::TempDir tmp("archive_bad");
    std::ofstream(tmp.path / "bad.emo") << "not an archive";
    CHECK_THROWS_AS(Archive::load(tmp.path / "bad.emo"), DataError);
    CHECK_THROWS_AS(Archive::load(tmp.path / "missing.emo"), DataError);
    Archive a;
    a.put("x", Eigen::VectorXd(Eigen::VectorXd::Ones(100)));
    auto bytes = a.to_bytes();
    bytes.resize(bytes.size() - 8);
    CHECK_THROWS_AS(Archive::from_bytes(bytes), DataError);
  }

  TEST_CASE("missing entries raise DataError") {
    Archive a;
    CHECK_FALSE(a.contains("x"));
    CHECK_THROWS_AS(a.matrix("x"), DataError);
  }

  TEST_CASE("sha256 matches published test vectors") {
    CHECK(sha256_hex(std::string("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex(std::string("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    Sha256 h;
    h.update(std::string("a")).update(std::string("bc"));
    CHECK(h.hex() == sha256_hex(std::string("abc")));
  }

  TEST_CASE("png round trip quantizes to 8 bits") {
    testing::TempDir tmp("png");
    Image img(7, 5, 3);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 7; ++x)
        for (int c = 0; c < 3; ++c) img.set(x, y, c, static_cast<float>((x * 31 + y * 17 + c * 5) % 256) / 255.0f);
    save_png(img, tmp.path / "a.png");
    const Image back = load_png(tmp.path / "a.png");
    REQUIRE(back.same_shape(img));
    CHECK(mean_abs_diff(back, img) < 1e-6);
  }

  TEST_CASE("float images are exact") {
    testing::TempDir tmp("fimg");
    Image img(3, 4, 1);
    img.set(1, 2, 0, 0.123456789f);
    save_float_image(img, tmp.path / "a.emo");
    CHECK(load_float_image(tmp.path / "a.emo") == img);
  }

  TEST_CASE("bilinear sampling interpolates pixel centres") {
    Image img(2, 1, 1);
    img.set(0, 0, 0, 0.0f);
    img.set(1, 0, 0, 1.0f);
    // pixel centres sit at x + 0.5
    CHECK(img.sample(0.5, 0.5, 0) == doctest::Approx(0.0));
    CHECK(img.sample(1.0, 0.5, 0) == doctest::Approx(0.5));
    CHECK(img.sample(1.5, 0.5, 0) == doctest::Approx(1.0));
  }
}
