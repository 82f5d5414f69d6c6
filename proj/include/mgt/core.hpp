#pragma once

// Core value types for masked-token sampling: token grids, per-position
// categorical distributions, and a counter-based splittable RNG.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace mgt {

using json = nlohmann::json;

// Thrown when a byte stream cannot be decoded; carries the failing offset.
class DecodeError : public std::runtime_error {
public:
    DecodeError(const std::string& what, size_t offset)
        : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    size_t offset() const { return offset_; }

private:
    size_t offset_;
};

// Thrown when an operation is applied to a grid/trace in the wrong state.
class StateError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// RngStream: counter-based splittable RNG. A draw is a pure function of
// (seed, stream, counter), so any sub-computation can own an independent
// stream and runs replay bit-exactly while individual algorithms are swapped.
// ---------------------------------------------------------------------------
struct RngStream {
    uint64_t seed    = 0;
    uint64_t stream  = 0;
    uint64_t counter = 0;

    RngStream() = default;
    explicit RngStream(uint64_t seed_, uint64_t stream_ = 0)
        : seed(seed_), stream(stream_) {}

    // SplitMix64 finalizer; bijective on 64 bits.
    static uint64_t mix(uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    // Derives a statistically independent child stream.
    RngStream child(uint64_t id) const {
        RngStream c;
        c.seed   = seed;
        c.stream = mix(mix(stream + 0x9E3779B97F4A7C15ull) ^ (id + 0xD1B54A32D192ED03ull));
        return c;
    }

    uint64_t next_u64() {
        uint64_t base = mix(seed + 0x2545F4914F6CDD1Dull) ^ mix(stream);
        uint64_t z    = base + (counter++) * 0x9E3779B97F4A7C15ull;
        return mix(z);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return double(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1], floored at 1e-30 so log() stays finite.
    double uniform_pos() {
        double u = 1.0 - uniform();
        return u < 1e-30 ? 1e-30 : u;
    }

    // Standard normal via Box-Muller; consumes two draws.
    double gaussian() {
        double u1 = uniform_pos();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }
};

// ---------------------------------------------------------------------------
// TokenGrid: the latent state. Cells hold either a token id in [0, vocab) or
// the mask sentinel, which is the id one past the vocabulary.
// ---------------------------------------------------------------------------
class TokenGrid {
public:
    TokenGrid() = default;

    TokenGrid(uint32_t width, uint32_t height, uint32_t vocab)
        : width_(width), height_(height), vocab_(vocab),
          cells_(size_t(width) * height, vocab) {
        if (width == 0 || height == 0 || vocab == 0) {
            throw std::invalid_argument("TokenGrid: width, height, vocab must be >= 1");
        }
    }

    uint32_t width() const { return width_; }
    uint32_t height() const { return height_; }
    uint32_t vocab() const { return vocab_; }
    uint32_t mask_id() const { return vocab_; }
    size_t size() const { return cells_.size(); }

    uint32_t cell(size_t i) const { return cells_[i]; }
    bool is_masked(size_t i) const { return cells_[i] == vocab_; }

    void set(size_t i, uint32_t id) {
        if (id >= vocab_) throw std::invalid_argument("TokenGrid::set: token id out of range");
        cells_[i] = id;
    }
    void mask(size_t i) { cells_[i] = vocab_; }

    size_t masked_count() const {
        return size_t(std::count(cells_.begin(), cells_.end(), vocab_));
    }

    std::vector<size_t> masked_positions() const {
        std::vector<size_t> out;
        for (size_t i = 0; i < cells_.size(); ++i)
            if (cells_[i] == vocab_) out.push_back(i);
        return out;
    }

    bool operator==(const TokenGrid& o) const {
        return width_ == o.width_ && height_ == o.height_ && vocab_ == o.vocab_ && cells_ == o.cells_;
    }

    const std::vector<uint32_t>& cells() const { return cells_; }

private:
    uint32_t width_  = 0;
    uint32_t height_ = 0;
    uint32_t vocab_  = 0;
    std::vector<uint32_t> cells_;
};

inline TokenGrid grid_new(uint32_t width, uint32_t height, uint32_t vocab) {
    return TokenGrid(width, height, vocab);
}

// ---------------------------------------------------------------------------
// Binary grid format: "MGRD" magic, u32 version, u32 width/height/vocab,
// then one little-endian u32 per cell (mask stored as vocab).
// ---------------------------------------------------------------------------
namespace detail {

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 24));
}

inline uint32_t get_u32(const std::vector<uint8_t>& in, size_t& off) {
    if (off + 4 > in.size()) throw DecodeError("grid stream truncated", off);
    uint32_t v = uint32_t(in[off]) | uint32_t(in[off + 1]) << 8 |
                 uint32_t(in[off + 2]) << 16 | uint32_t(in[off + 3]) << 24;
    off += 4;
    return v;
}

}  // namespace detail

constexpr uint32_t kGridMagic   = 0x4452474Du;  // "MGRD"
constexpr uint32_t kGridVersion = 1;

inline std::vector<uint8_t> grid_serialize(const TokenGrid& g) {
    std::vector<uint8_t> out;
    out.reserve(20 + 4 * g.size());
    detail::put_u32(out, kGridMagic);
    detail::put_u32(out, kGridVersion);
    detail::put_u32(out, g.width());
    detail::put_u32(out, g.height());
    detail::put_u32(out, g.vocab());
    for (size_t i = 0; i < g.size(); ++i) detail::put_u32(out, g.cell(i));
    return out;
}

inline TokenGrid grid_deserialize(const std::vector<uint8_t>& bytes) {
    size_t off = 0;
    uint32_t magic = detail::get_u32(bytes, off);
    if (magic != kGridMagic) throw DecodeError("bad grid magic", 0);
    uint32_t version = detail::get_u32(bytes, off);
    if (version != kGridVersion) throw DecodeError("unsupported grid version", 4);
    uint32_t w = detail::get_u32(bytes, off);
    uint32_t h = detail::get_u32(bytes, off);
    uint32_t v = detail::get_u32(bytes, off);
    if (w == 0 || h == 0 || v == 0) throw DecodeError("zero dimension in header", 8);
    TokenGrid g(w, h, v);
    for (size_t i = 0; i < g.size(); ++i) {
        size_t cell_off = off;
        uint32_t id = detail::get_u32(bytes, off);
        if (id > v) throw DecodeError("cell id out of range", cell_off);
        if (id == v) g.mask(i); else g.set(i, id);
    }
    if (off != bytes.size()) throw DecodeError("trailing bytes after grid", off);
    return g;
}

// Debug export; masked cells serialize as null.
inline json grid_to_json(const TokenGrid& g) {
    json cells = json::array();
    for (size_t i = 0; i < g.size(); ++i) {
        if (g.is_masked(i)) cells.push_back(nullptr);
        else cells.push_back(g.cell(i));
    }
    return json{{"width", g.width()}, {"height", g.height()}, {"vocab", g.vocab()}, {"cells", cells}};
}

// ---------------------------------------------------------------------------
// ProbField: one categorical distribution per grid position.
// ---------------------------------------------------------------------------
class ProbField {
public:
    ProbField() = default;
    ProbField(size_t positions, size_t vocab)
        : positions_(positions), vocab_(vocab), data_(positions * vocab, 0.0) {}

    size_t positions() const { return positions_; }
    size_t vocab() const { return vocab_; }

    double* row(size_t pos) { return data_.data() + pos * vocab_; }
    const double* row(size_t pos) const { return data_.data() + pos * vocab_; }

    double at(size_t pos, size_t tok) const { return data_[pos * vocab_ + tok]; }
    double& at(size_t pos, size_t tok) { return data_[pos * vocab_ + tok]; }

    bool operator==(const ProbField& o) const {
        return positions_ == o.positions_ && vocab_ == o.vocab_ && data_ == o.data_;
    }

    // Checks the distribution invariants: entries >= 0, each row sums to 1.
    void validate(double tol = 1e-9) const {
        for (size_t p = 0; p < positions_; ++p) {
            double sum = 0.0;
            for (size_t v = 0; v < vocab_; ++v) {
                double x = at(p, v);
                if (!(x >= 0.0)) throw std::invalid_argument("ProbField: negative entry");
                sum += x;
            }
            if (std::abs(sum - 1.0) > tol) throw std::invalid_argument("ProbField: row does not sum to 1");
        }
    }

private:
    size_t positions_ = 0;
    size_t vocab_     = 0;
    std::vector<double> data_;
};

constexpr uint32_t kProbMagic   = 0x4650474Du;  // "MGPF"
constexpr uint32_t kProbVersion = 1;

inline std::vector<uint8_t> probfield_serialize(const ProbField& f) {
    std::vector<uint8_t> out;
    out.reserve(16 + 8 * f.positions() * f.vocab());
    detail::put_u32(out, kProbMagic);
    detail::put_u32(out, kProbVersion);
    detail::put_u32(out, uint32_t(f.positions()));
    detail::put_u32(out, uint32_t(f.vocab()));
    for (size_t p = 0; p < f.positions(); ++p) {
        for (size_t v = 0; v < f.vocab(); ++v) {
            uint64_t bits;
            double x = f.at(p, v);
            std::memcpy(&bits, &x, 8);
            detail::put_u32(out, uint32_t(bits));
            detail::put_u32(out, uint32_t(bits >> 32));
        }
    }
    return out;
}

inline ProbField probfield_deserialize(const std::vector<uint8_t>& bytes) {
    size_t off = 0;
    if (detail::get_u32(bytes, off) != kProbMagic) throw DecodeError("bad probfield magic", 0);
    if (detail::get_u32(bytes, off) != kProbVersion) throw DecodeError("unsupported probfield version", 4);
    uint32_t k = detail::get_u32(bytes, off);
    uint32_t v = detail::get_u32(bytes, off);
    ProbField f(k, v);
    for (size_t p = 0; p < f.positions(); ++p) {
        for (size_t t = 0; t < f.vocab(); ++t) {
            uint64_t lo = detail::get_u32(bytes, off);
            uint64_t hi = detail::get_u32(bytes, off);
            uint64_t bits = lo | (hi << 32);
            double x;
            std::memcpy(&x, &bits, 8);
            f.at(p, t) = x;
        }
    }
    if (off != bytes.size()) throw DecodeError("trailing bytes after probfield", off);
    return f;
}

}  // namespace mgt
