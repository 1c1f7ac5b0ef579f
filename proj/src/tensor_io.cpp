#include "tcagcn/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

namespace tcagcn {

namespace {

constexpr std::array<char, 4> kMagic{'T', 'C', 'A', 'T'};

template <typename T>
void put_le(std::ostream& out, T value)
{
    std::array<unsigned char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in)
{
    std::array<unsigned char, sizeof(T)> bytes;
    if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
        throw ValidationError("tensor stream truncated");
    }
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t)
{
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) put_le<std::uint64_t>(out, e);
    for (double v : t.data()) put_le<double>(out, v);
    if (!out) throw ValidationError("failed writing tensor");
}

Tensor read_tensor(std::istream& in)
{
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw ValidationError("bad tensor magic (expected TCAT)");
    }
    const auto rank = get_le<std::uint32_t>(in);
    if (rank == 0 || rank > 16) throw ValidationError("unsupported tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& e : shape) {
        e = get_le<std::uint64_t>(in);
        if (e == 0 || e > (1ull << 32)) throw ValidationError("invalid tensor extent");
    }
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) v = get_le<double>(in);
    return Tensor(std::move(shape), std::move(data));
}

std::size_t serialized_size(const Tensor& t)
{
    return 4 + 4 + 8 * t.rank() + 8 * t.numel();
}

}  // namespace tcagcn
