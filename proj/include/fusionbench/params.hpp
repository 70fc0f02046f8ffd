#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fusionbench/errors.hpp"
#include "fusionbench/tensor.hpp"

namespace fusionbench {

// Named model weight. Names are dotted paths ("conv1.kernel") and unique
// within a model.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    bool trainable = true;
};

namespace detail {
template <typename T>
constexpr const char* dtype_tag() {
    if constexpr (sizeof(T) == 4) return "f32";
    else return "f64";
}
}  // namespace detail

// Single-file archive: text manifest (name, dtype, shape, byte offset into
// the data section) followed by raw little-endian arrays.
//
//   fusionbench-params-v1
//   <count>
//   <name> <dtype> <ndim> <dims...> <offset>
//   ...
//   DATA
//   <raw bytes>
inline constexpr const char* kParamsArchiveVersion = "fusionbench-params-v1";

template <typename T>
void save_parameters(const std::string& path, const std::vector<Parameter<T>>& params) {
    static_assert(std::endian::native == std::endian::little,
                  "archive format is little-endian");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("save_parameters: cannot open " + path);
    out << kParamsArchiveVersion << "\n" << params.size() << "\n";
    std::size_t offset = 0;
    for (const auto& p : params) {
        out << p.name << ' ' << detail::dtype_tag<T>() << ' ' << p.value.ndim();
        for (std::size_t d : p.value.shape()) out << ' ' << d;
        out << ' ' << offset << "\n";
        offset += p.value.numel() * sizeof(T);
    }
    out << "DATA\n";
    for (const auto& p : params)
        out.write(reinterpret_cast<const char*>(p.value.ptr()),
                  static_cast<std::streamsize>(p.value.numel() * sizeof(T)));
    if (!out) throw DataError("save_parameters: write failed for " + path);
}

template <typename T>
std::vector<Parameter<T>> load_parameters(const std::string& path) {
    static_assert(std::endian::native == std::endian::little,
                  "archive format is little-endian");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("load_parameters: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kParamsArchiveVersion)
        throw DataError("load_parameters: " + path + ": bad version line '" + line + "'");
    std::size_t count = 0;
    if (!(in >> count)) throw DataError("load_parameters: " + path + ": missing count");
    struct Entry {
        std::string name;
        Shape shape;
        std::size_t offset;
    };
    std::vector<Entry> entries(count);
    std::map<std::string, int> seen;
    for (auto& e : entries) {
        std::string dtype;
        std::size_t ndim = 0;
        if (!(in >> e.name >> dtype >> ndim))
            throw DataError("load_parameters: " + path + ": truncated manifest");
        if (dtype != detail::dtype_tag<T>())
            throw DataError("load_parameters: " + path + ": dtype " + dtype + " does not match " +
                            detail::dtype_tag<T>());
        e.shape.resize(ndim);
        for (auto& d : e.shape) in >> d;
        in >> e.offset;
        if (++seen[e.name] > 1)
            throw DataError("load_parameters: duplicate parameter name " + e.name);
    }
    std::getline(in, line);  // rest of last manifest line
    if (!std::getline(in, line) || line != "DATA")
        throw DataError("load_parameters: " + path + ": missing DATA marker");
    const std::streampos data_start = in.tellg();
    std::vector<Parameter<T>> params;
    params.reserve(count);
    for (const auto& e : entries) {
        Tensor<T> t(e.shape);
        in.seekg(data_start + static_cast<std::streamoff>(e.offset));
        in.read(reinterpret_cast<char*>(t.ptr()),
                static_cast<std::streamsize>(t.numel() * sizeof(T)));
        if (!in) throw DataError("load_parameters: " + path + ": truncated data for " + e.name);
        params.push_back({e.name, std::move(t), true});
    }
    return params;
}

}  // namespace fusionbench
