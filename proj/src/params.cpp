#include "ttp/params.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace ttp {

namespace {

constexpr char kMagic[8] = {'T', 'T', 'P', 'P', 'A', 'R', 'A', 'M'};

template <typename T>
void put_le(std::ostream& os, T value) {
    char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
    os.write(bytes, sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
    unsigned char bytes[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ParamMismatchError("truncated parameter file");
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
    return value;
}

}  // namespace

void ParamSet::add(std::string name, Tensor tensor, bool trainable) {
    if (find(name)) throw std::logic_error("duplicate parameter name " + name);
    entries_.push_back({std::move(name), std::move(tensor), trainable});
}

std::size_t ParamSet::count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

const NamedParam* ParamSet::find(const std::string& name) const {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const auto& e) { return e.name == name; });
    return it == entries_.end() ? nullptr : &*it;
}

ParamSet ParamSet::filter(bool trainable) const {
    ParamSet out;
    for (const auto& e : entries_) {
        if (e.trainable == trainable) out.entries_.push_back(e);
    }
    return out;
}

void save_params(const std::filesystem::path& path, const ParamSet& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(os, kParamFormatVersion);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& e : params.entries()) {
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    }
    std::uint32_t index = 0;
    for (const auto& e : params.entries()) {
        put_le<std::uint32_t>(os, index++);
        put_le<std::uint8_t>(os, e.trainable ? 1 : 0);
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.tensor.dim()));
        for (auto d : e.tensor.shape()) put_le<std::uint64_t>(os, d);
        for (double v : e.tensor.data()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    }
    if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::vector<ParamRecord> read_params(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParamMismatchError("cannot open parameter file " + path.string());
    char magic[8];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ParamMismatchError(path.string() + " is not a parameter file");
    }
    const auto version = get_le<std::uint32_t>(is);
    if (version != kParamFormatVersion) {
        throw ParamMismatchError("unsupported parameter file version " + std::to_string(version));
    }
    const auto count = get_le<std::uint32_t>(is);
    std::vector<std::string> names(count);
    for (auto& name : names) {
        const auto len = get_le<std::uint32_t>(is);
        name.resize(len);
        if (!is.read(name.data(), len)) throw ParamMismatchError("truncated name table");
    }
    std::vector<ParamRecord> records(count);
    for (auto& r : records) {
        const auto idx = get_le<std::uint32_t>(is);
        if (idx >= count) throw ParamMismatchError("name index out of range");
        r.name = names[idx];
        r.trainable = (get_le<std::uint8_t>(is) & 1) != 0;
        const auto rank = get_le<std::uint32_t>(is);
        r.shape.resize(rank);
        for (auto& d : r.shape) d = static_cast<std::size_t>(get_le<std::uint64_t>(is));
        r.values.resize(numel(r.shape));
        for (auto& v : r.values) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
    }
    return records;
}

void load_params(const std::filesystem::path& path, ParamSet& params) {
    auto records = read_params(path);
    std::unordered_map<std::string, ParamRecord*> by_name;
    for (auto& r : records) by_name[r.name] = &r;
    if (records.size() != params.size()) {
        throw ParamMismatchError("parameter count mismatch: file has " + std::to_string(records.size()) +
                                 ", model has " + std::to_string(params.size()));
    }
    for (auto& e : params.entries()) {
        auto it = by_name.find(e.name);
        if (it == by_name.end()) throw ParamMismatchError("parameter " + e.name + " missing from file");
        const ParamRecord& r = *it->second;
        if (r.shape != e.tensor.shape()) {
            throw ParamMismatchError("parameter " + e.name + " has shape " + to_string(r.shape) + " in file, " +
                                     to_string(e.tensor.shape()) + " in model");
        }
        if (r.trainable != e.trainable) throw ParamMismatchError("parameter " + e.name + " trainable flag differs");
    }
    for (auto& e : params.entries()) {
        const auto& values = by_name[e.name]->values;
        std::copy(values.begin(), values.end(), e.tensor.mutable_data().begin());
    }
}

}  // namespace ttp
