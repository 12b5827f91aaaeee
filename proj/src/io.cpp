#include "streamgeo/io.hpp"

#include "streamgeo/errors.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace streamgeo {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
        throw FormatError("config key '" + key + "': not a number: '" + text + "'");
    }
    return v;
}

std::int64_t parse_int(const std::string& key, const std::string& text) {
    std::int64_t v = 0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) {
        throw FormatError("config key '" + key + "': not an integer: '" + text + "'");
    }
    return v;
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, std::size_t& off, T v) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts need byte swapping");
    std::memcpy(out.data() + off, &v, sizeof(T));
    off += sizeof(T);
}

template <typename T>
T get_le(const std::vector<std::uint8_t>& in, std::size_t& off) {
    if (off + sizeof(T) > in.size()) {
        throw FormatError("pointmap dump truncated");
    }
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

} // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
    KeyValueConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw FormatError("config line " + std::to_string(lineno) + ": expected key=value");
        }
        const auto key = trim(t.substr(0, eq));
        if (key.empty()) {
            throw FormatError("config line " + std::to_string(lineno) + ": empty key");
        }
        cfg.set(key, trim(t.substr(eq + 1)));
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open config file " + path.string());
    }
    return parse(in);
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    if (values_.find(key) == values_.end()) {
        order_.push_back(key);
    }
    values_[key] = value;
}

void KeyValueConfig::set(const std::string& key, double value) {
    set(key, format_double(value));
}

void KeyValueConfig::set(const std::string& key, std::int64_t value) {
    set(key, std::to_string(value));
}

void KeyValueConfig::set(const std::string& key, const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) {
        s += (i ? " " : "") + format_double(values[i]);
    }
    set(key, s);
}

bool KeyValueConfig::contains(const std::string& key) const {
    return values_.count(key) != 0;
}

std::optional<std::string> KeyValueConfig::find(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key) const {
    auto v = find(key);
    if (!v) {
        throw FormatError("missing config key '" + key + "'");
    }
    return *v;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    return find(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key) const {
    return parse_double(key, get_string(key));
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    auto v = find(key);
    return v ? parse_double(key, *v) : fallback;
}

std::int64_t KeyValueConfig::get_int(const std::string& key) const {
    return parse_int(key, get_string(key));
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
    auto v = find(key);
    return v ? parse_int(key, *v) : fallback;
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key) const {
    std::istringstream is(get_string(key));
    std::vector<double> out;
    std::string tok;
    while (is >> tok) {
        out.push_back(parse_double(key, tok));
    }
    return out;
}

void KeyValueConfig::write(std::ostream& out) const {
    for (const auto& k : order_) {
        out << k << '=' << values_.at(k) << '\n';
    }
}

void KeyValueConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write config file " + path.string());
    }
    write(out);
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::vector<std::uint8_t> encode_pointmap(const PointmapDump& dump) {
    const auto& p = dump.points;
    if (p.rank() != 4 || p.dim(3) != 3) {
        throw ContractError("pointmap dump expects [V, H, W, 3] points, got " + p.shape_string());
    }
    const auto v = static_cast<std::uint32_t>(p.dim(0));
    const auto h = static_cast<std::uint32_t>(p.dim(1));
    const auto w = static_cast<std::uint32_t>(p.dim(2));
    const std::size_t pixels = static_cast<std::size_t>(v) * h * w;
    if (dump.mask.size() != pixels) {
        throw ContractError("pointmap dump mask length does not match dims");
    }
    std::vector<std::uint8_t> out(18 + pixels * 13);
    std::memcpy(out.data(), "SGPM", 4);
    std::size_t off = 4;
    put_le<std::uint16_t>(out, off, PointmapDump::kVersion);
    put_le<std::uint32_t>(out, off, v);
    put_le<std::uint32_t>(out, off, h);
    put_le<std::uint32_t>(out, off, w);
    for (float f : p.data()) {
        put_le<float>(out, off, f);
    }
    for (auto m : dump.mask) {
        out[off++] = m ? 1 : 0;
    }
    return out;
}

PointmapDump decode_pointmap(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "SGPM", 4) != 0) {
        throw FormatError("pointmap dump: bad magic");
    }
    std::size_t off = 4;
    const auto version = get_le<std::uint16_t>(bytes, off);
    if (version != PointmapDump::kVersion) {
        throw FormatError("pointmap dump: unsupported version " + std::to_string(version));
    }
    const auto v = get_le<std::uint32_t>(bytes, off);
    const auto h = get_le<std::uint32_t>(bytes, off);
    const auto w = get_le<std::uint32_t>(bytes, off);
    if (v == 0 || h == 0 || w == 0) {
        throw FormatError("pointmap dump: zero dimension");
    }
    const std::size_t pixels = static_cast<std::size_t>(v) * h * w;
    if (bytes.size() - off != pixels * 3 * sizeof(float) + pixels) {
        throw FormatError("pointmap dump: payload length does not match header dims");
    }
    PointmapDump dump;
    std::vector<float> data(pixels * 3);
    for (auto& f : data) {
        f = get_le<float>(bytes, off);
    }
    dump.points = Tensor({v, h, w, 3}, std::move(data));
    dump.mask.assign(bytes.begin() + static_cast<std::ptrdiff_t>(off), bytes.end());
    for (auto m : dump.mask) {
        if (m > 1) {
            throw FormatError("pointmap dump: mask byte out of range");
        }
    }
    return dump;
}

void write_pointmap(const std::filesystem::path& path, const PointmapDump& dump) {
    const auto bytes = encode_pointmap(dump);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot write pointmap " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

PointmapDump read_pointmap(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open pointmap " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_pointmap(bytes);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::string& schema,
                     const std::vector<std::string>& header)
    : out_(path, std::ios::binary), columns_(header.size()) {
    if (!out_) {
        throw FormatError("cannot write csv " + path.string());
    }
    if (!schema.empty()) {
        out_ << "# schema: " << schema << '\n';
    }
    row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) {
        throw ContractError("csv row has " + std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(columns_));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
        out_ << (i ? "," : "") << cells[i];
    }
    out_ << '\n';
    out_.flush();
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open csv " + path.string());
    }
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line.front() == '#') {
            continue;
        }
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) {
            cells.push_back(cell);
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

} // namespace streamgeo
