#include "metawalk/checkpoint.hpp"

#include <cstring>

namespace metawalk {

BinWriter::BinWriter(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw CheckpointError("cannot open " + path + " for writing");
}

void BinWriter::u32(uint32_t x) { out_.write(reinterpret_cast<const char*>(&x), 4); }
void BinWriter::u64(uint64_t x) { out_.write(reinterpret_cast<const char*>(&x), 8); }
void BinWriter::i64(int64_t x) { out_.write(reinterpret_cast<const char*>(&x), 8); }
void BinWriter::f64(double x) { out_.write(reinterpret_cast<const char*>(&x), 8); }

void BinWriter::str(const std::string& s) {
    u64(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void BinWriter::f64_array(const std::vector<double>& xs) {
    u64(xs.size());
    out_.write(reinterpret_cast<const char*>(xs.data()),
               static_cast<std::streamsize>(xs.size() * sizeof(double)));
}

void BinWriter::close() {
    out_.close();
    if (!out_) throw CheckpointError("error writing " + path_);
}

BinReader::BinReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw CheckpointError("cannot open " + path);
}

void BinReader::need(size_t bytes, void* dst) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(bytes));
    if (static_cast<size_t>(in_.gcount()) != bytes)
        throw CheckpointError("truncated checkpoint: " + path_);
}

uint32_t BinReader::u32() {
    uint32_t x;
    need(4, &x);
    return x;
}

uint64_t BinReader::u64() {
    uint64_t x;
    need(8, &x);
    return x;
}

int64_t BinReader::i64() {
    int64_t x;
    need(8, &x);
    return x;
}

double BinReader::f64() {
    double x;
    need(8, &x);
    return x;
}

std::string BinReader::str() {
    uint64_t n = u64();
    std::string s(n, '\0');
    if (n) need(n, s.data());
    return s;
}

std::vector<double> BinReader::f64_array() {
    uint64_t n = u64();
    std::vector<double> xs(n);
    if (n) need(n * sizeof(double), xs.data());
    return xs;
}

void write_header(BinWriter& w, uint32_t magic) {
    w.u32(magic);
    w.u32(kFormatVersion);
}

void read_header(BinReader& r, uint32_t expected_magic, const std::string& what) {
    uint32_t magic = r.u32();
    if (magic != expected_magic)
        throw CheckpointVersionError(what + ": wrong file magic");
    uint32_t version = r.u32();
    if (version != kFormatVersion)
        throw CheckpointVersionError(what + ": unsupported format version " +
                                     std::to_string(version));
}

void save_params(const ParamSet& params, const std::string& path) {
    BinWriter w(path);
    write_header(w, kTensorMagic);
    w.u64(params.meta.size());
    for (const auto& [k, v] : params.meta) {
        w.str(k);
        w.str(v);
    }
    w.i64(params.step());
    w.u64(params.tensors().size());
    for (const auto& [name, t] : params.tensors()) {
        w.str(name);
        w.u64(t.shape.size());
        for (int64_t d : t.shape) w.i64(d);
        w.f64_array(t.v);
    }
    w.close();
}

ParamSet load_params(const std::string& path) {
    BinReader r(path);
    read_header(r, kTensorMagic, path);
    ParamSet params;
    uint64_t n_meta = r.u64();
    for (uint64_t i = 0; i < n_meta; ++i) {
        std::string k = r.str();
        params.meta[k] = r.str();
    }
    params.step() = r.i64();
    uint64_t n_tensors = r.u64();
    for (uint64_t i = 0; i < n_tensors; ++i) {
        std::string name = r.str();
        uint64_t rank = r.u64();
        std::vector<int64_t> shape(rank);
        for (auto& d : shape) d = r.i64();
        int64_t expect = 1;
        for (int64_t d : shape) expect *= d;
        Tensor t;
        t.shape = std::move(shape);
        t.v = r.f64_array();
        if (t.numel() != expect)
            throw CheckpointError(path + ": tensor " + name + " has inconsistent shape");
        params.insert(name, std::move(t));
    }
    return params;
}

}  // namespace metawalk
