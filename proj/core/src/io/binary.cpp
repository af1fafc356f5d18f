#include "ccm/io/binary.hpp"

#include "ccm/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace ccm::io {

namespace {

std::uint64_t to_le(std::uint64_t v)
{
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) {
            r = (r << 8) | ((v >> (8 * i)) & 0xff);
        }
        return r;
    }
}

} // namespace

void write_f64(const std::filesystem::path& path, std::span<const double> values)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ContractError("cannot open '" + path.string() + "' for writing");
    }
    std::vector<std::uint64_t> buf(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        buf[i] = to_le(std::bit_cast<std::uint64_t>(values[i]));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
    if (!out) {
        throw ContractError("short write to '" + path.string() + "'");
    }
}

std::vector<double> read_f64(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ContractError("cannot open '" + path.string() + "'");
    }
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    if (bytes % 8 != 0) {
        throw ContractError("'" + path.string() + "' is not a whole number of float64 values");
    }
    std::vector<std::uint64_t> buf(bytes / 8);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    std::vector<double> values(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) {
        values[i] = std::bit_cast<double>(to_le(buf[i]));
    }
    return values;
}

void write_text(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ContractError("cannot open '" + path.string() + "' for writing");
    }
    out << text;
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ContractError("cannot open '" + path.string() + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fnv1a_hex(const std::string& bytes)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

} // namespace ccm::io
