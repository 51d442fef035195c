#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ttp/tensor.hpp"

namespace ttp {

struct NamedParam {
    std::string name;
    Tensor tensor;
    bool trainable = false;
};

/// Ordered view over model parameters. Entries share storage with the model.
class ParamSet {
public:
    void add(std::string name, Tensor tensor, bool trainable);
    const std::vector<NamedParam>& entries() const { return entries_; }
    std::vector<NamedParam>& entries() { return entries_; }
    std::size_t size() const { return entries_.size(); }
    /// Total scalar count.
    std::size_t count() const;
    const NamedParam* find(const std::string& name) const;
    ParamSet filter(bool trainable) const;

private:
    std::vector<NamedParam> entries_;
};

/// Raised when a parameter file does not fit the model it is loaded into.
class ParamMismatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Flat little-endian parameter file:
//   magic "TTPPARAM" | u32 version | u32 count
//   name table: count x (u32 length, bytes)
//   records:    count x (u32 name index, u8 flags (bit 0 = trainable),
//                        u32 rank, rank x u64 dims, numel x f64)
inline constexpr std::uint32_t kParamFormatVersion = 1;

struct ParamRecord {
    std::string name;
    Shape shape;
    bool trainable = false;
    std::vector<double> values;
};

void save_params(const std::filesystem::path& path, const ParamSet& params);
std::vector<ParamRecord> read_params(const std::filesystem::path& path);
/// Copies values into `params` by name. Names, shapes and trainable flags must match exactly.
void load_params(const std::filesystem::path& path, ParamSet& params);

}  // namespace ttp
