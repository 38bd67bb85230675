// SPDX-License-Identifier: Apache-2.0
#include "symgrade/checkpoint.hpp"

#include "symgrade/errors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace symgrade {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::vector<char>& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.insert(out.end(), bytes, bytes + sizeof(T));
}

void put_array(std::vector<char>& out, const NamedArray& a) {
    if (a.name.size() > UINT16_MAX) throw FormatError("array name too long: " + a.name);
    if (a.shape.size() > UINT8_MAX) throw FormatError("array rank too large: " + a.name);
    if (element_count(a.shape) != a.data.size()) throw ShapeError("array '" + a.name + "' data does not match its shape");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(a.name.size()));
    out.insert(out.end(), a.name.begin(), a.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(a.shape.size()));
    for (auto d : a.shape) put<std::uint64_t>(out, d);
    for (double v : a.data) put<double>(out, v);
}

class Reader {
public:
    Reader(const std::vector<char>& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        char raw[sizeof(T)];
        std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
        pos_ += sizeof(T);
        T value;
        std::memcpy(&value, raw, sizeof(T));
        return value;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s(bytes_.data() + pos_, n);
        pos_ += n;
        return s;
    }

    NamedArray array() {
        NamedArray a;
        a.name = bytes(get<std::uint16_t>());
        const auto rank = get<std::uint8_t>();
        std::uint64_t count = 1;
        for (unsigned i = 0; i < rank; ++i) {
            const auto d = get<std::uint64_t>();
            if (d != 0 && count > remaining() / d) fail("array '" + a.name + "' larger than the file");
            count *= d;
            a.shape.push_back(static_cast<std::size_t>(d));
        }
        if (count > remaining() / sizeof(double)) fail("truncated data for array '" + a.name + "'");
        a.data.reserve(static_cast<std::size_t>(count));
        for (std::uint64_t i = 0; i < count; ++i) a.data.push_back(get<double>());
        return a;
    }

    std::vector<NamedArray> section() {
        const auto count = get<std::uint32_t>();
        std::vector<NamedArray> out;
        for (std::uint32_t i = 0; i < count; ++i) out.push_back(array());
        return out;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }

    [[noreturn]] void fail(const std::string& what) const {
        throw FormatError(origin_ + ": " + what + " (offset " + std::to_string(pos_) + ")");
    }

private:
    void need(std::size_t n) const {
        if (remaining() < n) fail("truncated checkpoint");
    }

    const std::vector<char>& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

} // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::vector<char> out(kCheckpointMagic, kCheckpointMagic + 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& a : ckpt.params) put_array(out, a);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.optimizer.size()));
    for (const auto& a : ckpt.optimizer) put_array(out, a);
    nlohmann::json meta = ckpt.meta;
    meta["epoch"] = ckpt.epoch;
    const std::string text = meta.dump();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());

    // Write-then-rename so an interrupted save never clobbers the previous file.
    const auto tmp = std::filesystem::path(path).concat(".tmp");
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write checkpoint " + tmp.string());
        f.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!f) throw IoError("write failed for checkpoint " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path.string());
    const std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r(bytes, path.string());
    if (r.bytes(4) != std::string(kCheckpointMagic, 4)) r.fail("bad magic, not a checkpoint");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.params = r.section();
    ckpt.optimizer = r.section();
    const auto len = r.get<std::uint32_t>();
    const std::string text = r.bytes(len);
    if (r.remaining() != 0) r.fail("trailing bytes after metadata");
    try {
        ckpt.meta = nlohmann::json::parse(text);
        ckpt.epoch = ckpt.meta.at("epoch").get<std::uint64_t>();
        ckpt.meta.erase("epoch");
    } catch (const nlohmann::json::exception& e) {
        r.fail(std::string("bad metadata: ") + e.what());
    }
    return ckpt;
}

} // namespace symgrade
