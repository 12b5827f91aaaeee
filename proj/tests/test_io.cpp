#include <doctest.h>

#include "streamgeo/errors.hpp"
#include "streamgeo/io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace streamgeo;

namespace {

PointmapDump small_dump() {
    PointmapDump d;
    d.points = Tensor({1, 2, 2, 3}, {1, 2, 3, 4, 5, 6, -7, 8.5F, 9, 0, 0, 1e6F});
    d.mask = {1, 1, 0, 1};
    return d;
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    std::uint8_t b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
}

// Byte layout written by hand from the format description.
std::vector<std::uint8_t> reference_bytes(const PointmapDump& d) {
    std::vector<std::uint8_t> out{'S', 'G', 'P', 'M'};
    put<std::uint16_t>(out, 1);
    put<std::uint32_t>(out, 1);
    put<std::uint32_t>(out, 2);
    put<std::uint32_t>(out, 2);
    for (float f : d.points.data()) {
        put<float>(out, f);
    }
    out.insert(out.end(), d.mask.begin(), d.mask.end());
    return out;
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "streamgeo_io_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("key=value config parsing") {
    std::istringstream in("# comment\n\n a = 1.5 \nname=curve\nlist = 1 2 3\ncount=7\n");
    const auto kv = KeyValueConfig::parse(in);
    CHECK(kv.get_double("a") == 1.5);
    CHECK(kv.get_string("name") == "curve");
    CHECK(kv.get_doubles("list") == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(kv.get_int("count") == 7);
    CHECK(kv.get_int("missing", 3) == 3);
    CHECK(kv.keys() == std::vector<std::string>{"a", "name", "list", "count"});
    CHECK_THROWS_AS(kv.get_string("missing"), FormatError);
    CHECK_THROWS_AS(kv.get_double("name"), FormatError);
    CHECK_THROWS_AS(kv.get_int("a"), FormatError);
}

TEST_CASE("malformed config lines are rejected") {
    std::istringstream no_eq("just text\n");
    CHECK_THROWS_AS(KeyValueConfig::parse(no_eq), FormatError);
    std::istringstream no_key(" = 4\n");
    CHECK_THROWS_AS(KeyValueConfig::parse(no_key), FormatError);
    CHECK_THROWS_AS(KeyValueConfig::load("/nonexistent/streamgeo.cfg"), FormatError);
}

TEST_CASE("config write then parse round-trips doubles exactly") {
    KeyValueConfig kv;
    kv.set("pi", 3.141592653589793);
    kv.set("tiny", 1e-300);
    kv.set("n", 42);
    kv.set("v", std::vector<double>{0.1, -2.5});
    std::ostringstream out;
    kv.write(out);
    std::istringstream in(out.str());
    const auto back = KeyValueConfig::parse(in);
    CHECK(back.get_double("pi") == 3.141592653589793);
    CHECK(back.get_double("tiny") == 1e-300);
    CHECK(back.get_int("n") == 42);
    CHECK(back.get_doubles("v") == std::vector<double>{0.1, -2.5});
}

TEST_CASE("pointmap encoding matches the documented byte layout") {
    const auto d = small_dump();
    CHECK(encode_pointmap(d) == reference_bytes(d));
    const auto back = decode_pointmap(reference_bytes(d));
    CHECK(back.points == d.points);
    CHECK(back.mask == d.mask);
}

TEST_CASE("pointmap file round trip") {
    const auto d = small_dump();
    const auto path = scratch("p.sgpm");
    write_pointmap(path, d);
    const auto back = read_pointmap(path);
    CHECK(back.points == d.points);
    CHECK(back.mask == d.mask);
    CHECK_THROWS_AS(read_pointmap(scratch("absent.sgpm")), FormatError);
}

TEST_CASE("corrupt pointmap dumps are rejected") {
    const auto good = reference_bytes(small_dump());

    auto magic = good;
    magic[0] = 'X';
    CHECK_THROWS_AS(decode_pointmap(magic), FormatError);

    auto version = good;
    version[4] = 9;
    CHECK_THROWS_AS(decode_pointmap(version), FormatError);

    auto truncated = good;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_pointmap(truncated), FormatError);

    auto extra = good;
    extra.push_back(0);
    CHECK_THROWS_AS(decode_pointmap(extra), FormatError);

    auto mask = good;
    mask.back() = 2;
    CHECK_THROWS_AS(decode_pointmap(mask), FormatError);

    CHECK_THROWS_AS(decode_pointmap({'S', 'G'}), FormatError);

    PointmapDump bad;
    bad.points = Tensor({2, 3});
    CHECK_THROWS_AS(encode_pointmap(bad), ContractError);
}

TEST_CASE("csv writer enforces column count") {
    const auto path = scratch("t.csv");
    {
        CsvWriter w(path, "test/1", {"a", "b"});
        w.row({"1", "2"});
        CHECK_THROWS_AS(w.row({"1"}), ContractError);
    }
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    CHECK(first == "# schema: test/1");
    const auto rows = read_csv(path);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == std::vector<std::string>{"a", "b"});
    CHECK(rows[1] == std::vector<std::string>{"1", "2"});
}
