#include "dctcn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dctcn/errors.hpp"

namespace dctcn {

namespace {

constexpr char kMagic[4] = {'D', 'C', 'T', 'C'};

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::string_view take(std::size_t n) {
        if (bytes_.size() - pos_ < n) throw IoError("checkpoint truncated at byte " + std::to_string(pos_));
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::uint32_t u32() {
        auto s = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
        return v;
    }

    double f64() {
        auto s = take(8);
        std::uint64_t bits = 0;
        for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
        return std::bit_cast<double>(bits);
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::string encode_checkpoint(const NamedTensors& arrays) {
    std::string out(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& [name, tensor] : arrays) {
        if (name.empty()) throw IoError("checkpoint entry with empty name");
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d : tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : tensor.data()) put_f64(out, v);
    }
    return out;
}

NamedTensors decode_checkpoint(std::string_view bytes) {
    Reader in(bytes);
    if (in.take(4) != std::string_view(kMagic, 4)) throw IoError("checkpoint: bad magic");
    const auto version = in.u32();
    if (version != kCheckpointVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version));
    const auto count = in.u32();
    NamedTensors arrays;
    for (std::uint32_t e = 0; e < count; ++e) {
        std::string name(in.take(in.u32()));
        const auto rank = in.u32();
        Shape shape;
        for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(in.u32());
        const std::size_t numel = shape_numel(shape);
        if (numel > bytes.size() / 8) throw IoError("checkpoint truncated in entry '" + name + "'");
        std::vector<double> data(numel);
        for (double& v : data) v = in.f64();
        if (!arrays.emplace(name, Tensor(std::move(shape), std::move(data))).second)
            throw IoError("checkpoint: duplicate entry '" + name + "'");
    }
    if (!in.done()) throw IoError("checkpoint: trailing bytes");
    return arrays;
}

void save_checkpoint(const NamedTensors& arrays, const std::filesystem::path& path) {
    const std::string bytes = encode_checkpoint(arrays);
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return decode_checkpoint(buf.str());
}

Tensor string_to_tensor(std::string_view s) {
    std::vector<double> data;
    data.reserve(s.size());
    for (char ch : s) data.push_back(static_cast<double>(static_cast<unsigned char>(ch)));
    return Tensor({s.size()}, std::move(data));
}

std::string tensor_to_string(const Tensor& t) {
    std::string s;
    s.reserve(t.size());
    for (double v : t.data()) {
        if (v < 0 || v > 255 || v != static_cast<double>(static_cast<int>(v)))
            throw IoError("text entry holds a non-byte value");
        s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
    return s;
}

} // namespace dctcn
