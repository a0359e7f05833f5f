#ifndef STEERLAB_SHA256_HPP_
#define STEERLAB_SHA256_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace steerlab {

// Minimal SHA-256 (FIPS 180-4), enough for checkpoint and corpus digests.
class Sha256 {
  public:
    Sha256() { reset(); }

    void reset();
    void update(const void* data, size_t len);
    // hex digest; finalizes a copy so the instance can keep accumulating
    std::string hex() const;

  private:
    void process_block(const uint8_t* p);

    uint32_t h_[8];
    uint8_t buf_[64];
    size_t buf_len_ = 0;
    uint64_t total_ = 0;
};

std::string sha256_hex(const void* data, size_t len);
std::string sha256_hex(const std::string& s);
std::string sha256_file_hex(const std::string& path);

}  // namespace steerlab

#endif  // STEERLAB_SHA256_HPP_
