#include "meta4/core/serialize.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace meta4 {

namespace {

constexpr char kTensorMagic[4] = {'M', '4', 'T', 'S'};
constexpr char kContainerMagic[4] = {'M', '4', 'N', 'T'};
constexpr uint32_t kContainerVersion = 1;

// The project targets little-endian hosts; the on-disk layout is the host
// layout of these fixed-width types.
template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    require(static_cast<bool>(is), "tensor stream: truncated input");
    return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
    require(t.defined(), "write_tensor: undefined tensor");
    os.write(kTensorMagic, 4);
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.rank()));
    for (size_t d : t.shape()) write_pod<uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
    require(static_cast<bool>(os), "write_tensor: stream write failed");
}

Tensor read_tensor(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    require(static_cast<bool>(is) && std::memcmp(magic, kTensorMagic, 4) == 0,
            "read_tensor: bad magic");
    uint32_t rank = read_pod<uint32_t>(is);
    require(rank <= 8, "read_tensor: implausible rank ", rank);
    std::vector<size_t> shape(rank);
    size_t n = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        uint64_t d = read_pod<uint64_t>(is);
        require(d > 0 && d < (1ull << 32), "read_tensor: bad dimension ", d);
        shape[i] = static_cast<size_t>(d);
        n *= shape[i];
    }
    std::vector<double> data(n);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    require(static_cast<bool>(is), "read_tensor: truncated payload");
    return Tensor::from_data(std::move(shape), std::move(data));
}

void write_named_tensors(
    std::ostream& os,
    const std::vector<std::pair<std::string, Tensor>>& items) {
    os.write(kContainerMagic, 4);
    write_pod<uint32_t>(os, kContainerVersion);
    write_pod<uint64_t>(os, items.size());
    for (const auto& [name, t] : items) {
        require(!name.empty(), "write_named_tensors: empty tensor name");
        write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor(os, t);
    }
}

std::vector<std::pair<std::string, Tensor>> read_named_tensors(
    std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    require(
        static_cast<bool>(is) && std::memcmp(magic, kContainerMagic, 4) == 0,
        "read_named_tensors: bad magic");
    uint32_t version = read_pod<uint32_t>(is);
    require(version == kContainerVersion,
            "read_named_tensors: unsupported version ", version);
    uint64_t count = read_pod<uint64_t>(is);
    std::vector<std::pair<std::string, Tensor>> items;
    items.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        uint32_t len = read_pod<uint32_t>(is);
        require(len > 0 && len < 4096, "read_named_tensors: bad name length");
        std::string name(len, '\0');
        is.read(name.data(), len);
        require(static_cast<bool>(is), "read_named_tensors: truncated name");
        items.emplace_back(std::move(name), read_tensor(is));
    }
    return items;
}

void save_named_tensors(
    const std::string& path,
    const std::vector<std::pair<std::string, Tensor>>& items) {
    std::ofstream os(path, std::ios::binary);
    require(os.is_open(), "cannot open ", path, " for writing");
    write_named_tensors(os, items);
    require(static_cast<bool>(os), "write to ", path, " failed");
}

std::vector<std::pair<std::string, Tensor>> load_named_tensors(
    const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.is_open(), "cannot open ", path);
    return read_named_tensors(is);
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    require(os.is_open(), "cannot open ", path, " for writing");
    write_tensor(os, t);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(is.is_open(), "cannot open ", path);
    return read_tensor(is);
}

}  // namespace meta4
