#pragma once
// Binary checkpoint container: named tensors + string metadata + step counter.
// Little-endian, versioned, bit-exact round trip. The same low-level reader/
// writer backs the graph checkpoint ("MWKG") and the tensor checkpoint
// ("MWCK"); embedding-model checkpoints are tensor checkpoints with a
// model-kind metadata entry.

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "metawalk/tensor.hpp"

namespace metawalk {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised on magic/version mismatch; the CLI maps this to its own exit code.
struct CheckpointVersionError : CheckpointError {
    using CheckpointError::CheckpointError;
};

inline constexpr uint32_t kTensorMagic = 0x4b43574dU;  // "MWCK"
inline constexpr uint32_t kGraphMagic = 0x474b574dU;   // "MWKG"
inline constexpr uint32_t kFormatVersion = 1;

class BinWriter {
public:
    explicit BinWriter(const std::string& path);
    void u32(uint32_t x);
    void u64(uint64_t x);
    void i64(int64_t x);
    void f64(double x);
    void str(const std::string& s);
    void f64_array(const std::vector<double>& xs);
    void close();

private:
    std::ofstream out_;
    std::string path_;
};

class BinReader {
public:
    explicit BinReader(const std::string& path);
    uint32_t u32();
    uint64_t u64();
    int64_t i64();
    double f64();
    std::string str();
    std::vector<double> f64_array();

private:
    void need(size_t bytes, void* dst);
    std::ifstream in_;
    std::string path_;
};

// Verifies magic and version; throws CheckpointVersionError otherwise.
void read_header(BinReader& r, uint32_t expected_magic, const std::string& what);
void write_header(BinWriter& w, uint32_t magic);

void save_params(const ParamSet& params, const std::string& path);
ParamSet load_params(const std::string& path);

}  // namespace metawalk
