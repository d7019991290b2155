#include "qvl/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "qvl/errors.hpp"

static_assert(std::endian::native == std::endian::little, "QVL1 writer assumes a little-endian host");

namespace qvl {

void ParameterSet::add(std::string name, Tensor value) {
    if (name.empty()) throw ValidationError("parameter name must not be empty");
    if (index_.count(name)) throw ValidationError("duplicate parameter name: " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
}

void ParameterSet::set(const std::string& name, Tensor value) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter: " + name);
    Tensor& slot = entries_[it->second].second;
    if (!(slot.shape() == value.shape())) {
        throw ShapeError("parameter " + name + " has shape " + shape_str(slot.shape()) +
                         ", cannot assign " + shape_str(value.shape()));
    }
    slot = std::move(value);
    ++version_;
}

const Tensor& ParameterSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter: " + name);
    return entries_[it->second].second;
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::uint8_t* bytes, std::size_t len, std::size_t& off) {
    if (off + sizeof(T) > len) throw ValidationError("QVL1 stream truncated");
    T v;
    std::memcpy(&v, bytes + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_params(const ParameterSet& ps) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), {'Q', 'V', 'L', '1'});
    for (const auto& [name, t] : ps.entries()) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
        const auto* p = reinterpret_cast<const std::uint8_t*>(t.data());
        out.insert(out.end(), p, p + static_cast<std::size_t>(t.numel()) * sizeof(double));
    }
    return out;
}

ParameterSet deserialize_params(const std::uint8_t* bytes, std::size_t len) {
    if (len < 4 || std::memcmp(bytes, "QVL1", 4) != 0) {
        throw ValidationError("not a QVL1 stream (bad magic)");
    }
    ParameterSet ps;
    std::size_t off = 4;
    while (off < len) {
        const auto name_len = take<std::uint32_t>(bytes, len, off);
        if (off + name_len > len) throw ValidationError("QVL1 stream truncated");
        std::string name(reinterpret_cast<const char*>(bytes + off), name_len);
        off += name_len;
        const auto rank = take<std::uint32_t>(bytes, len, off);
        if (rank > 8) throw ValidationError("QVL1 entry rank " + std::to_string(rank) + " is implausible");
        Shape shape;
        std::int64_t numel = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const auto d = take<std::uint64_t>(bytes, len, off);
            if (d == 0 || d > (1ULL << 32)) throw ValidationError("QVL1 entry has invalid dim");
            shape.push_back(static_cast<std::int64_t>(d));
            numel *= static_cast<std::int64_t>(d);
        }
        if (off + static_cast<std::size_t>(numel) * sizeof(double) > len)
            throw ValidationError("QVL1 stream truncated");
        std::vector<double> data(static_cast<std::size_t>(numel));
        std::memcpy(data.data(), bytes + off, data.size() * sizeof(double));
        off += data.size() * sizeof(double);
        ps.add(std::move(name), Tensor::from_data(std::move(shape), std::move(data)));
    }
    return ps;
}

void save_params(const ParameterSet& ps, const std::string& path) {
    const auto bytes = serialize_params(ps);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed: " + path);
}

ParameterSet load_params(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path);
    const std::streamsize n = f.tellg();
    f.seekg(0);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
    f.read(reinterpret_cast<char*>(bytes.data()), n);
    if (!f) throw IoError("read failed: " + path);
    return deserialize_params(bytes.data(), bytes.size());
}

}  // namespace qvl
