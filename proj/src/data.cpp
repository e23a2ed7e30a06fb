#include "husformer/data.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace hus {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'F', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr double kTwoPi = 6.283185307179586476925286766559;

class ByteWriter {
public:
    explicit ByteWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw DataError("cannot open '" + path + "' for writing");
    }
    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u16(std::uint16_t v) {
        unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
        bytes(b, 2);
    }
    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 4);
    }
    void f64(double v) {
        const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
        bytes(b, 8);
    }
    void close(const std::string& path) {
        out_.close();
        if (!out_) throw DataError("failed writing '" + path + "'");
    }

private:
    std::ofstream out_;
};

class ByteReader {
public:
    explicit ByteReader(const std::string& path) {
        std::ifstream in(path, std::ios::binary | std::ios::ate);
        if (!in) throw DataError("cannot open '" + path + "' for reading");
        const auto size = in.tellg();
        in.seekg(0);
        buf_.resize(static_cast<std::size_t>(size));
        in.read(reinterpret_cast<char*>(buf_.data()), size);
        if (!in) throw DataError("failed reading '" + path + "'");
    }

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return buf_.size() - pos_; }

    void need(std::size_t n, const char* what) {
        if (remaining() < n) throw FormatError(std::string("truncated file while reading ") + what, pos_);
    }
    void raw(void* p, std::size_t n, const char* what) {
        need(n, what);
        std::memcpy(p, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(u);
    }

private:
    std::vector<unsigned char> buf_;
    std::size_t pos_ = 0;
};

}  // namespace

std::size_t Dataset::fusion_rows() const {
    std::size_t total = 0;
    for (const auto& m : modalities) total += m.channels;
    return total;
}

void Dataset::validate() const {
    if (num_classes < 2) throw DataError("dataset needs at least 2 classes");
    for (std::size_t s = 0; s < samples.size(); ++s) {
        const auto& sample = samples[s];
        if (sample.arrays.size() != modalities.size()) {
            throw DataError("sample " + std::to_string(s) + " has " + std::to_string(sample.arrays.size()) +
                            " modalities, dataset declares " + std::to_string(modalities.size()));
        }
        if (sample.label >= num_classes) {
            throw DataError("sample " + std::to_string(s) + " label " + std::to_string(sample.label) +
                            " >= class count " + std::to_string(num_classes));
        }
        for (std::size_t m = 0; m < modalities.size(); ++m) {
            const std::size_t want = modalities[m].channels * modalities[m].dim;
            if (sample.arrays[m].size() != want) {
                throw DataError("sample " + std::to_string(s) + " modality '" + modalities[m].name +
                                "' has " + std::to_string(sample.arrays[m].size()) + " values, expected " +
                                std::to_string(want));
            }
            for (double v : sample.arrays[m]) {
                if (!std::isfinite(v)) {
                    throw DataError("sample " + std::to_string(s) + " modality '" + modalities[m].name +
                                    "' contains a non-finite value");
                }
            }
        }
    }
}

void write_dataset(const Dataset& ds, const std::string& path) {
    ds.validate();
    ByteWriter w(path);
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(ds.modalities.size()));
    w.u32(ds.num_classes);
    for (const auto& m : ds.modalities) {
        w.u32(static_cast<std::uint32_t>(m.name.size()));
        w.bytes(m.name.data(), m.name.size());
        w.u32(static_cast<std::uint32_t>(m.channels));
        w.u32(static_cast<std::uint32_t>(m.dim));
    }
    w.u32(static_cast<std::uint32_t>(ds.samples.size()));
    for (const auto& sample : ds.samples) {
        for (const auto& arr : sample.arrays)
            for (double v : arr) w.f64(v);
        w.u16(sample.label);
    }
    w.close(path);
}

Dataset read_dataset(const std::string& path) {
    ByteReader r(path);
    char magic[4];
    r.raw(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic, not an HSF1 file", 0);
    const std::uint32_t version = r.u32("version");
    if (version != kVersion) throw FormatError("unsupported version " + std::to_string(version), 4);

    Dataset ds;
    const std::uint32_t n = r.u32("modality count");
    ds.num_classes = r.u32("class count");
    if (ds.num_classes < 2) throw FormatError("class count must be >= 2", r.offset() - 4);
    for (std::uint32_t i = 0; i < n; ++i) {
        ModalityLayout m;
        const std::uint32_t name_len = r.u32("modality name length");
        m.name.resize(name_len);
        r.raw(m.name.data(), name_len, "modality name");
        m.channels = r.u32("modality channels");
        m.dim = r.u32("modality dim");
        if (m.channels == 0 || m.dim == 0) {
            throw FormatError("modality '" + m.name + "' has zero extent", r.offset() - 8);
        }
        ds.modalities.push_back(std::move(m));
    }
    const std::uint32_t count = r.u32("sample count");
    ds.samples.reserve(count);
    for (std::uint32_t s = 0; s < count; ++s) {
        MultiModalSample sample;
        sample.arrays.reserve(n);
        for (const auto& m : ds.modalities) {
            std::vector<double> arr(m.channels * m.dim);
            for (double& v : arr) {
                const std::size_t at = r.offset();
                v = r.f64("sample values");
                if (!std::isfinite(v)) throw FormatError("non-finite sample value", at);
            }
            sample.arrays.push_back(std::move(arr));
        }
        const std::size_t label_at = r.offset();
        sample.label = r.u16("label");
        if (sample.label >= ds.num_classes) {
            throw FormatError("label " + std::to_string(sample.label) + " >= class count " +
                              std::to_string(ds.num_classes), label_at);
        }
        ds.samples.push_back(std::move(sample));
    }
    if (r.remaining() != 0) {
        throw FormatError(std::to_string(r.remaining()) + " trailing bytes after last record", r.offset());
    }
    return ds;
}

Dataset synthesize_dataset(const SynthesisParams& params) {
    if (params.modalities.empty()) throw ConfigError("synthesize_dataset: no modalities");
    if (params.num_classes < 2) throw ConfigError("synthesize_dataset: need at least 2 classes");
    if (params.num_samples < params.num_classes) {
        throw ConfigError("synthesize_dataset: need at least one sample per class");
    }
    if (params.coupling < 0.0 || params.coupling > 1.0) {
        throw ConfigError("synthesize_dataset: coupling must lie in [0, 1]");
    }
    for (const auto& m : params.modalities) {
        if (m.channels == 0 || m.dim == 0) {
            throw ConfigError("synthesize_dataset: modality '" + m.name + "' has zero extent");
        }
    }

    const std::size_t n = params.modalities.size();
    const double c = static_cast<double>(params.num_classes);
    Rng rng(params.seed);

    Dataset ds;
    ds.modalities = params.modalities;
    ds.num_classes = params.num_classes;
    ds.samples.reserve(params.num_samples);
    for (std::size_t s = 0; s < params.num_samples; ++s) {
        MultiModalSample sample;
        sample.label = static_cast<std::uint16_t>(rng.below(params.num_classes));
        const double phi = rng.uniform(0.0, kTwoPi);
        const double amplitude = rng.uniform(0.9, 1.1);
        sample.arrays.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& m = params.modalities[i];
            const double theta = kTwoPi * static_cast<double>(i + 1) * static_cast<double>(sample.label) /
                                 (c * static_cast<double>(n + 1));
            const double psi = params.coupling * phi + theta;
            std::vector<double> arr(m.channels * m.dim);
            for (std::size_t l = 0; l < m.channels; ++l) {
                const double channel_lag = 0.8 * static_cast<double>(l);
                for (std::size_t t = 0; t < m.dim; ++t) {
                    const double angle = kTwoPi * params.carrier_cycles * static_cast<double>(t + 1) /
                                             static_cast<double>(m.dim) +
                                         psi + channel_lag;
                    arr[l * m.dim + t] = amplitude * std::sin(angle) + params.noise * rng.normal();
                }
            }
            sample.arrays.push_back(std::move(arr));
        }
        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

std::vector<ModalityLayout> default_synth_layout(std::size_t n_modalities) {
    if (n_modalities == 0) throw ConfigError("default_synth_layout: modality count must be >= 1");
    static constexpr std::size_t kChannels[3] = {1, 2, 3};
    static constexpr std::size_t kDims[3] = {16, 12, 8};
    std::vector<ModalityLayout> out;
    out.reserve(n_modalities);
    for (std::size_t i = 0; i < n_modalities; ++i) {
        out.push_back({"m" + std::to_string(i), kChannels[i % 3], kDims[i % 3]});
    }
    return out;
}

std::string synthesis_manifest_json(const SynthesisParams& params) {
    nlohmann::ordered_json j;
    j["generator"] = "phase-coupled sinusoids v1";
    j["num_samples"] = params.num_samples;
    j["num_classes"] = params.num_classes;
    j["coupling"] = params.coupling;
    j["seed"] = params.seed;
    j["noise"] = params.noise;
    j["carrier_cycles"] = params.carrier_cycles;
    j["modalities"] = nlohmann::ordered_json::array();
    for (const auto& m : params.modalities) {
        j["modalities"].push_back({{"name", m.name}, {"channels", m.channels}, {"dim", m.dim}});
    }
    return j.dump(2) + "\n";
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, bool shuffle,
                                                    std::uint64_t seed) {
    if (batch_size == 0) throw ConfigError("batch_indices: batch size must be >= 1");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (shuffle) {
        Rng rng(seed);
        rng.shuffle(order);
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

Dataset slice_modality(const Dataset& ds, std::size_t modality_index) {
    if (modality_index >= ds.modalities.size()) {
        throw ConfigError("slice_modality: index " + std::to_string(modality_index) + " out of range");
    }
    Dataset out;
    out.modalities = {ds.modalities[modality_index]};
    out.num_classes = ds.num_classes;
    out.samples.reserve(ds.samples.size());
    for (const auto& s : ds.samples) {
        MultiModalSample slice;
        slice.arrays = {s.arrays[modality_index]};
        slice.label = s.label;
        out.samples.push_back(std::move(slice));
    }
    return out;
}

}  // namespace hus
