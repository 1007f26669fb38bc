#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace heisim {

uint64_t fnv1a64(const std::string& data);

// CSV body = header line + rows + trailing checksum comment of everything
// above it: "# fnv1a64=<hex>".  Rows carry no timestamps, so identical
// (config, seed) runs produce byte-identical files.
std::string csv_with_checksum(const std::string& header,
                              const std::vector<std::string>& rows);

// Verifies the trailing checksum line of a CSV produced above.
bool verify_csv_checksum(const std::string& body);

void ensure_dir(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace heisim
