// SPDX-License-Identifier: Apache-2.0
#include "taste/array_io.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace taste {

namespace {

constexpr char kArrayMagic[4] = {'T', 'A', 'R', 'R'};
constexpr char kCkptMagic[4] = {'T', 'C', 'K', 'P'};
constexpr uint8_t kFormatVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {
        static_cast<unsigned char>(v & 0xff),
        static_cast<unsigned char>((v >> 8) & 0xff),
        static_cast<unsigned char>((v >> 16) & 0xff),
        static_cast<unsigned char>((v >> 24) & 0xff),
    };
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is, const std::string& ctx) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    require_data(static_cast<bool>(is), "truncated file while reading " + ctx);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_u16(std::ostream& os, uint16_t v) {
    unsigned char b[2] = {
        static_cast<unsigned char>(v & 0xff),
        static_cast<unsigned char>((v >> 8) & 0xff),
    };
    os.write(reinterpret_cast<const char*>(b), 2);
}

uint16_t get_u16(std::istream& is, const std::string& ctx) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    require_data(static_cast<bool>(is), "truncated file while reading " + ctx);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_array_blob(std::ostream& os, const ArrayData& a) {
    os.write(kArrayMagic, 4);
    os.put(static_cast<char>(kFormatVersion));
    os.put(static_cast<char>(a.shape.size()));
    for (uint32_t s : a.shape) put_u32(os, s);
    static_assert(sizeof(float) == 4);
    // float32 is little-endian on every supported target
    os.write(reinterpret_cast<const char*>(a.data.data()),
             static_cast<std::streamsize>(a.data.size() * 4));
}

ArrayData read_array_blob(std::istream& is, const std::string& ctx) {
    char magic[4];
    is.read(magic, 4);
    require_data(static_cast<bool>(is) && std::memcmp(magic, kArrayMagic, 4) == 0,
                 "bad array magic in " + ctx);
    int version = is.get();
    require_data(version == kFormatVersion,
                 "unsupported array format version " + std::to_string(version) + " in " + ctx);
    int rank = is.get();
    require_data(rank >= 0 && rank <= 8, "bad array rank in " + ctx);
    ArrayData a;
    a.shape.resize(static_cast<size_t>(rank));
    for (int i = 0; i < rank; ++i) a.shape[static_cast<size_t>(i)] = get_u32(is, ctx);
    a.data.resize(a.element_count());
    is.read(reinterpret_cast<char*>(a.data.data()),
            static_cast<std::streamsize>(a.data.size() * 4));
    require_data(static_cast<bool>(is), "truncated payload in " + ctx);
    return a;
}

void atomic_write(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        require_data(os.is_open(), "cannot open for write: " + tmp);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        require_data(static_cast<bool>(os), "write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    require_data(!ec, "rename failed: " + path);
}

} // namespace

void write_array(const std::string& path, const ArrayData& a) {
    std::ostringstream os(std::ios::binary);
    write_array_blob(os, a);
    atomic_write(path, os.str());
}

ArrayData read_array(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require_data(is.is_open(), "missing array file: " + path);
    return read_array_blob(is, path);
}

Mat array_to_mat(const ArrayData& a) {
    require_data(a.shape.size() == 2, "expected rank-2 array");
    Mat m(a.shape[0], a.shape[1]);
    for (uint32_t i = 0; i < a.shape[0]; ++i)
        for (uint32_t j = 0; j < a.shape[1]; ++j)
            m(i, j) = static_cast<double>(a.data[static_cast<size_t>(i) * a.shape[1] + j]);
    return m;
}

ArrayData mat_to_array(const Mat& m) {
    ArrayData a;
    a.shape = {static_cast<uint32_t>(m.rows()), static_cast<uint32_t>(m.cols())};
    a.data.resize(static_cast<size_t>(m.rows()) * static_cast<size_t>(m.cols()));
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j)
            a.data[static_cast<size_t>(i) * static_cast<size_t>(m.cols()) + static_cast<size_t>(j)] =
                static_cast<float>(m(i, j));
    return a;
}

void write_array(const std::string& path, const Mat& m) {
    write_array(path, mat_to_array(m));
}

Mat read_array_mat(const std::string& path) {
    return array_to_mat(read_array(path));
}

void write_array(const std::string& path, const std::vector<int>& v) {
    ArrayData a;
    a.shape = {static_cast<uint32_t>(v.size())};
    a.data.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) a.data[i] = static_cast<float>(v[i]);
    write_array(path, a);
}

std::vector<int> read_array_ints(const std::string& path) {
    ArrayData a = read_array(path);
    require_data(a.shape.size() == 1, "expected rank-1 array: " + path);
    std::vector<int> v(a.data.size());
    for (size_t i = 0; i < a.data.size(); ++i) v[i] = static_cast<int>(a.data[i]);
    return v;
}

void write_checkpoint(const std::string& path, const std::map<std::string, Mat>& entries) {
    std::ostringstream os(std::ios::binary);
    os.write(kCkptMagic, 4);
    os.put(static_cast<char>(kFormatVersion));
    put_u32(os, static_cast<uint32_t>(entries.size()));
    for (const auto& [name, m] : entries) {
        require_arg(name.size() < 65535, "checkpoint entry name too long");
        put_u16(os, static_cast<uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_array_blob(os, mat_to_array(m));
    }
    atomic_write(path, os.str());
}

std::map<std::string, Mat> read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require_data(is.is_open(), "missing checkpoint file: " + path);
    char magic[4];
    is.read(magic, 4);
    require_data(static_cast<bool>(is) && std::memcmp(magic, kCkptMagic, 4) == 0,
                 "bad checkpoint magic: " + path);
    int version = is.get();
    require_data(version == kFormatVersion,
                 "unsupported checkpoint version " + std::to_string(version) + ": " + path);
    uint32_t count = get_u32(is, path);
    std::map<std::string, Mat> out;
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t len = get_u16(is, path);
        std::string name(len, '\0');
        is.read(name.data(), len);
        require_data(static_cast<bool>(is), "truncated entry name in " + path);
        out[name] = array_to_mat(read_array_blob(is, path));
    }
    return out;
}

} // namespace taste
