#include "husformer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "husformer/config.hpp"
#include "husformer/variants.hpp"

namespace hus {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'F', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ofstream& out, double v) {
    const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

struct Reader {
    std::vector<unsigned char> buf;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (buf.size() - pos < n) throw FormatError(std::string("truncated checkpoint at ") + what, pos);
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        return std::bit_cast<double>(u);
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    const std::string cfg_json = model_config_to_json(cfg);
    put_u32(out, static_cast<std::uint32_t>(cfg_json.size()));
    out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
    put_u32(out, static_cast<std::uint32_t>(params.trainable.size()));
    for (const auto& t : params.trainable) {
        put_u32(out, static_cast<std::uint32_t>(t->shape.size()));
        for (std::size_t d : t->shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (double v : t->data) put_f64(out, v);
    }
    out.close();
    if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r;
    {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw DataError("cannot open checkpoint '" + path + "'");
        const auto size = in.tellg();
        in.seekg(0);
        r.buf.resize(static_cast<std::size_t>(size));
        in.read(reinterpret_cast<char*>(r.buf.data()), size);
        if (!in) throw DataError("failed reading checkpoint '" + path + "'");
    }
    r.need(4, "magic");
    if (std::memcmp(r.buf.data(), kMagic, 4) != 0) throw FormatError("bad magic, not a checkpoint", 0);
    r.pos = 4;
    const std::uint32_t version = r.u32("version");
    if (version != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
    const std::uint32_t cfg_len = r.u32("config length");
    r.need(cfg_len, "config JSON");
    const std::string cfg_json(reinterpret_cast<const char*>(r.buf.data() + r.pos), cfg_len);
    r.pos += cfg_len;

    Checkpoint ckpt;
    ckpt.config = model_config_from_json(cfg_json);
    Rng rng(0);  // values are overwritten below
    ckpt.params = build_variant(ckpt.config, rng);

    const std::uint32_t count = r.u32("tensor count");
    if (count != ckpt.params.trainable.size()) {
        throw FormatError("checkpoint has " + std::to_string(count) + " tensors, config builds " +
                          std::to_string(ckpt.params.trainable.size()), r.pos - 4);
    }
    for (std::size_t i = 0; i < count; ++i) {
        TensorPtr t = ckpt.params.trainable[i];
        const std::uint32_t rank = r.u32("tensor rank");
        if (rank != t->shape.size()) {
            throw FormatError("tensor '" + ckpt.params.names[i] + "' rank mismatch", r.pos - 4);
        }
        for (std::size_t d = 0; d < rank; ++d) {
            const std::uint32_t dim = r.u32("tensor dim");
            if (dim != t->shape[d]) {
                throw FormatError("tensor '" + ckpt.params.names[i] + "' shape mismatch", r.pos - 4);
            }
        }
        for (std::size_t j = 0; j < t->numel(); ++j) t->data[j] = r.f64("tensor data");
    }
    if (r.pos != r.buf.size()) {
        throw FormatError("trailing bytes after last tensor", r.pos);
    }
    return ckpt;
}

}  // namespace hus
