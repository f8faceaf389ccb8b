#include "structformer/serialize.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace structformer {

namespace {

constexpr char kMagic[4] = {'S', 'F', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_le(std::ofstream& out, T value) {
    // Build is little-endian only; raw write matches the wire format.
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_le(std::ifstream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    check(static_cast<bool>(in), "tensor container: unexpected end of file");
    return value;
}

}  // namespace

void save_tensor_container(const std::string& path, const ParamMap& tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(static_cast<bool>(out), "cannot open for writing: " + path);
    out.write(kMagic, 4);
    write_le(out, kVersion);
    write_le(out, static_cast<std::uint64_t>(tensors.size()));
    for (const auto& t : tensors) {
        write_le(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        write_le(out, static_cast<std::uint32_t>(t.tensor.rank()));
        for (int d : t.tensor.shape()) {
            write_le(out, static_cast<std::uint64_t>(d));
        }
        for (real v : t.tensor.values()) {
            write_le(out, static_cast<float>(v));
        }
    }
    check(static_cast<bool>(out), "write failed: " + path);
}

ParamMap load_tensor_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(static_cast<bool>(in), "cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    check(static_cast<bool>(in) && std::memcmp(magic, kMagic, 4) == 0,
          "not a tensor container: " + path);
    const auto version = read_le<std::uint32_t>(in);
    check(version == kVersion, "unsupported container version " + std::to_string(version));
    const auto count = read_le<std::uint64_t>(in);
    ParamMap out;
    out.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto name_len = read_le<std::uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        check(static_cast<bool>(in), "tensor container: truncated name");
        const auto rank = read_le<std::uint32_t>(in);
        std::vector<int> shape(rank);
        for (auto& d : shape) {
            d = static_cast<int>(read_le<std::uint64_t>(in));
        }
        const std::size_t numel = shape_numel(shape);
        std::vector<real> values(numel);
        for (auto& v : values) {
            v = static_cast<real>(read_le<float>(in));
        }
        out.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
    }
    return out;
}

}  // namespace structformer
