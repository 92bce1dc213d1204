#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace leaky {

// Error taxonomy. The CLI maps kinds to exit codes:
//   config/validation/ingest/statistics -> 1, dependency/capability -> 2,
//   numerical -> 3.
enum class ErrorKind {
    config,
    validation,
    ingest,
    statistics,
    dependency,
    capability,
    numerical,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, std::string message)
        : std::runtime_error(std::move(message)), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    int exit_code() const noexcept {
        switch (kind_) {
            case ErrorKind::dependency:
            case ErrorKind::capability: return 2;
            case ErrorKind::numerical: return 3;
            default: return 1;
        }
    }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

// FNV-1a, used for checkpoint identity and seed-stream derivation.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string& s,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
    return fnv1a64(s.data(), s.size(), seed);
}

std::string hex64(std::uint64_t v);

}  // namespace leaky
