#include "tlora/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include "tlora/errors.hpp"

namespace tlora {

namespace {

void put_bytes(std::string& out, std::uint64_t v, int n_bytes) {
    for (int i = 0; i < n_bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::uint64_t take_uint(int n_bytes) {
        if (pos_ + static_cast<std::size_t>(n_bytes) > bytes_.size()) {
            throw ConfigError("checkpoint: truncated file");
        }
        std::uint64_t v = 0;
        for (int i = 0; i < n_bytes; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(n_bytes);
        return v;
    }

    std::string take_string(std::size_t len) {
        if (pos_ + len > bytes_.size()) throw ConfigError("checkpoint: truncated file");
        std::string s(bytes_.substr(pos_, len));
        pos_ += len;
        return s;
    }

    double take_f64() { return std::bit_cast<double>(take_uint(8)); }

    bool done() const { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string Checkpoint::serialize() const {
    std::string out;
    out += "TLRA";
    put_bytes(out, kCheckpointVersion, 4);
    put_bytes(out, tensors.size(), 4);
    for (const NamedTensor& t : tensors) {
        put_bytes(out, t.name.size(), 2);
        out += t.name;
        put_bytes(out, t.value.rows(), 8);
        put_bytes(out, t.value.cols(), 8);
        for (std::size_t i = 0; i < t.value.size(); ++i) {
            put_bytes(out, std::bit_cast<std::uint64_t>(t.value.data()[i]), 8);
        }
    }
    put_bytes(out, metadata_json.size(), 4);
    out += metadata_json;
    return out;
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
    Reader r(bytes);
    if (r.take_string(4) != "TLRA") throw ConfigError("checkpoint: bad magic");
    const std::uint64_t version = r.take_uint(4);
    if (version != kCheckpointVersion) {
        throw ConfigError("checkpoint: unsupported version " + std::to_string(version));
    }
    Checkpoint ckpt;
    const std::uint64_t count = r.take_uint(4);
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.take_string(r.take_uint(2));
        const std::uint64_t rows = r.take_uint(8);
        const std::uint64_t cols = r.take_uint(8);
        if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20)) {
            throw ConfigError("checkpoint: implausible tensor shape for '" + t.name + "'");
        }
        t.value = Matrix(rows, cols);
        for (std::size_t j = 0; j < t.value.size(); ++j) t.value.data()[j] = r.take_f64();
        ckpt.tensors.push_back(std::move(t));
    }
    ckpt.metadata_json = r.take_string(r.take_uint(4));
    if (!r.done()) throw ConfigError("checkpoint: trailing bytes");
    return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("checkpoint: cannot open '" + path.string() + "' for writing");
    const std::string bytes = serialize();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("checkpoint: write failed for '" + path.string() + "'");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("checkpoint: cannot open '" + path.string() + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

const Matrix* Checkpoint::find(std::string_view name) const {
    for (const NamedTensor& t : tensors) {
        if (t.name == name) return &t.value;
    }
    return nullptr;
}

const Matrix& Checkpoint::require(std::string_view name) const {
    const Matrix* m = find(name);
    if (!m) throw ConfigError("checkpoint: missing tensor '" + std::string(name) + "'");
    return *m;
}

}  // namespace tlora
