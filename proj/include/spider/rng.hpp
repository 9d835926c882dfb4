#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace spider {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is identified by (seed, stream id); block k of the stream is
/// philox(counter = {k_lo, k_hi, id_lo, id_hi}, key = seed). Draws depend only
/// on the identifiers and the draw index, never on which thread consumes them.
class PhiloxStream {
public:
    using result_type = std::uint32_t;
    using Block = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    PhiloxStream(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return next_u32(); }

    std::uint32_t next_u32() {
        if (word_ == 4) refill();
        return block_[word_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        return lo | (static_cast<std::uint64_t>(next_u32()) << 32);
    }

    /// One fair coin flip; consumes 1 bit of a buffered 64-bit word.
    bool next_bit() {
        if (bits_left_ == 0) {
            bits_ = next_u64();
            bits_left_ = 64;
        }
        const bool bit = bits_ & 1u;
        bits_ >>= 1;
        --bits_left_;
        return bit;
    }

    /// Uniform integer in [0, n), n >= 1 (Lemire's nearly divisionless method).
    std::uint32_t uniform_index(std::uint32_t n) {
        std::uint64_t m = static_cast<std::uint64_t>(next_u32()) * n;
        auto low = static_cast<std::uint32_t>(m);
        if (low < n) {
            const std::uint32_t threshold = (0u - n) % n;
            while (low < threshold) {
                m = static_cast<std::uint64_t>(next_u32()) * n;
                low = static_cast<std::uint32_t>(m);
            }
        }
        return static_cast<std::uint32_t>(m >> 32);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    static Block philox(Block ctr, Key key) {
        constexpr std::uint32_t kMul0 = 0xD2511F53;
        constexpr std::uint32_t kMul1 = 0xCD9E8D57;
        constexpr std::uint32_t kWeyl0 = 0x9E3779B9;
        constexpr std::uint32_t kWeyl1 = 0xBB67AE85;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
                   static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
                   static_cast<std::uint32_t>(p0)};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

private:
    void refill() {
        block_ = philox({static_cast<std::uint32_t>(counter_),
                         static_cast<std::uint32_t>(counter_ >> 32),
                         static_cast<std::uint32_t>(stream_),
                         static_cast<std::uint32_t>(stream_ >> 32)},
                        key_);
        ++counter_;
        word_ = 0;
    }

    Key key_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    Block block_{};
    int word_ = 4;
    std::uint64_t bits_ = 0;
    int bits_left_ = 0;
};

}  // namespace spider
