#pragma once

#include "streamgeo/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace streamgeo {

// Plain "key=value" text, one entry per line. Blank lines and lines starting
// with '#' are ignored. Keys keep insertion order when written back.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::istream& in);
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    void set(const std::string& key, double value);
    void set(const std::string& key, std::int64_t value);
    void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
    void set(const std::string& key, const std::vector<double>& values);

    bool contains(const std::string& key) const;
    std::optional<std::string> find(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::vector<double> get_doubles(const std::string& key) const;

    const std::vector<std::string>& keys() const { return order_; }

    void write(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;

private:
    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
};

// Shortest decimal text that round-trips the value exactly.
std::string format_double(double v);

// Binary pointmap dump: magic "SGPM", u16 version, u32 V, H, W, then
// V*H*W*3 little-endian f32, then V*H*W mask bytes (0 or 1).
struct PointmapDump {
    static constexpr std::uint16_t kVersion = 1;

    Tensor points; // [V, H, W, 3]
    std::vector<std::uint8_t> mask;
};

void write_pointmap(const std::filesystem::path& path, const PointmapDump& dump);
PointmapDump read_pointmap(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pointmap(const PointmapDump& dump);
PointmapDump decode_pointmap(const std::vector<std::uint8_t>& bytes);

// CSV writer: optional schema comment, a header row, then rows.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::string& schema,
              const std::vector<std::string>& header);
    void row(const std::vector<std::string>& cells);

private:
    std::ofstream out_;
    std::size_t columns_;
};

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

} // namespace streamgeo
