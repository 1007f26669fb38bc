#include "heisim/report.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace heisim {

uint64_t fnv1a64(const std::string& data) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

std::string csv_with_checksum(const std::string& header,
                              const std::vector<std::string>& rows) {
    std::string body = header;
    body.push_back('\n');
    for (const auto& r : rows) {
        body += r;
        body.push_back('\n');
    }
    std::ostringstream os;
    os << body << "# fnv1a64=" << std::hex << fnv1a64(body) << "\n";
    return os.str();
}

bool verify_csv_checksum(const std::string& body) {
    auto pos = body.rfind("# fnv1a64=");
    if (pos == std::string::npos) return false;
    std::string payload = body.substr(0, pos);
    std::string tail = body.substr(pos + 10);
    uint64_t stated = std::stoull(tail, nullptr, 16);
    return stated == fnv1a64(payload);
}

void ensure_dir(const std::string& path) {
    std::filesystem::create_directories(path);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    os << content;
}

std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for read: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

}  // namespace heisim
