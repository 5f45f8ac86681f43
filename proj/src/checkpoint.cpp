#include "mixsup/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <string>

#include "mixsup/error.hpp"

namespace mixsup {

namespace {

constexpr char kMagic[] = "MIXSUP1";
constexpr std::size_t kMagicLength = sizeof(kMagic) - 1;
constexpr std::uint32_t kFormatVersion = 1;

template <class T>
void put(std::ofstream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
        throw Error(Errc::BadCheckpoint, "truncated checkpoint '" + path.string() + "'");
    }
    return value;
}

void put_floats(std::ofstream& out, const std::vector<float>& v) {
    put<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<float> get_floats(std::ifstream& in, const std::filesystem::path& path) {
    const auto n = get<std::uint64_t>(in, path);
    if (n > (std::uint64_t{1} << 32)) throw Error(Errc::BadCheckpoint, "implausible array length in '" + path.string() + "'");
    std::vector<float> v(static_cast<std::size_t>(n));
    if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(float)))) {
        throw Error(Errc::BadCheckpoint, "truncated checkpoint '" + path.string() + "'");
    }
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    // Write-then-rename so a crash never leaves a half-written checkpoint.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::IoError, "cannot write '" + tmp.string() + "'");
        out.write(kMagic, kMagicLength);
        put(out, kFormatVersion);
        put<std::int32_t>(out, ckpt.model.input_channels);
        for (int c : ckpt.model.stage_channels) put<std::int32_t>(out, c);
        put<std::int32_t>(out, ckpt.model.fusion_channels);
        put<std::uint64_t>(out, ckpt.step);
        put_floats(out, ckpt.parameters);
        put_floats(out, ckpt.velocity);
        if (!out) throw Error(Errc::IoError, "write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(Errc::IoError, "cannot move checkpoint to '" + path.string() + "': " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open checkpoint '" + path.string() + "'");
    char magic[kMagicLength];
    if (!in.read(magic, kMagicLength) || std::memcmp(magic, kMagic, kMagicLength) != 0) {
        throw Error(Errc::BadCheckpoint, "'" + path.string() + "' is not a MIXSUP1 checkpoint");
    }
    const auto version = get<std::uint32_t>(in, path);
    if (version != kFormatVersion) {
        throw Error(Errc::BadCheckpoint, "unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.model.input_channels = get<std::int32_t>(in, path);
    for (auto& c : ckpt.model.stage_channels) c = get<std::int32_t>(in, path);
    ckpt.model.fusion_channels = get<std::int32_t>(in, path);
    ckpt.step = get<std::uint64_t>(in, path);
    ckpt.parameters = get_floats(in, path);
    ckpt.velocity = get_floats(in, path);
    try {
        ckpt.model.validate();
    } catch (const Error& e) {
        throw Error(Errc::BadCheckpoint, "'" + path.string() + "': " + e.what());
    }
    if (ckpt.parameters.size() != parameter_count(ckpt.model) ||
        (!ckpt.velocity.empty() && ckpt.velocity.size() != ckpt.parameters.size())) {
        throw Error(Errc::BadCheckpoint, "'" + path.string() + "': array sizes do not match the model config");
    }
    return ckpt;
}

}  // namespace mixsup
