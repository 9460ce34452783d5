#include "changebind/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include <fmt/format.h>

namespace changebind {

namespace {

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void u32(std::uint32_t v) { le(v); }
    void u64(std::uint64_t v) { le(v); }
    void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }

private:
    template <class U>
    void le(U v) {
        unsigned char buf[sizeof(U)];
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            buf[i] = static_cast<unsigned char>(v >> (8 * i));
        }
        bytes(buf, sizeof(U));
    }

    std::ostream& out_;
};

class Reader {
public:
    Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    std::uint32_t u32() { return le<std::uint32_t>(); }
    std::uint64_t u64() { return le<std::uint64_t>(); }
    float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) {
            throw DataError(fmt::format("checkpoint {} is truncated", source_));
        }
    }

private:
    template <class U>
    U le() {
        unsigned char buf[sizeof(U)];
        bytes(buf, sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            v |= static_cast<U>(buf[i]) << (8 * i);
        }
        return v;
    }

    std::istream& in_;
    std::string source_;
};

} // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError(fmt::format("cannot open {} for writing", path.string()));
    }
    Writer w(out);
    w.bytes(kCheckpointMagic, 4);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.u32(static_cast<std::uint32_t>(tensor.rank()));
        for (auto d : tensor.shape()) {
            w.u64(static_cast<std::uint64_t>(d));
        }
        std::visit([&](const auto& v) {
            for (auto x : v) {
                w.f32(static_cast<float>(x));
            }
        }, tensor.buffer());
    }
    if (!out) {
        throw IoError(fmt::format("failed writing {}", path.string()));
    }
}

std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(fmt::format("cannot open checkpoint {}", path.string()));
    }
    Reader r(in, path.string());
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw DataError(fmt::format("{} is not a checkpoint (bad magic)", path.string()));
    }
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw DataError(fmt::format("checkpoint {} has unsupported version {}", path.string(), version));
    }
    const auto count = r.u32();
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name(r.u32(), '\0');
        r.bytes(name.data(), name.size());
        Shape shape(r.u32());
        for (auto& d : shape) {
            d = static_cast<std::int64_t>(r.u64());
        }
        std::vector<float> values(static_cast<std::size_t>(shape_numel(shape)));
        for (auto& v : values) {
            v = r.f32();
        }
        tensors.push_back({std::move(name), Tensor::from_buffer(std::move(shape), std::move(values))});
    }
    return tensors;
}

void save_parameters(const std::filesystem::path& path, const ParameterSet& parameters) {
    write_checkpoint(path, parameters.items());
}

void load_parameters(const std::filesystem::path& path, const ParameterSet& parameters) {
    auto stored = read_checkpoint(path);
    std::unordered_map<std::string, const Tensor*> by_name;
    for (const auto& t : stored) {
        by_name.emplace(t.name, &t.tensor);
    }
    if (by_name.size() != parameters.size()) {
        throw DataError(fmt::format("checkpoint {} holds {} tensors, model has {}", path.string(), by_name.size(),
                                    parameters.size()));
    }
    for (const auto& [name, target] : parameters) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw DataError(fmt::format("checkpoint {} is missing parameter '{}'", path.string(), name));
        }
        const Tensor& src = *it->second;
        if (src.shape() != target.shape()) {
            throw DataError(fmt::format("parameter '{}' has shape {} in checkpoint, {} in model", name,
                                        shape_string(src.shape()), shape_string(target.shape())));
        }
        Tensor dst = target;
        const auto values = src.data<float>();
        for (std::int64_t i = 0; i < dst.numel(); ++i) {
            dst.set(i, values[i]);
        }
    }
}

} // namespace changebind
