#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "husformer/errors.hpp"
#include "husformer/rng.hpp"

namespace hus {

// Shape of one modality's array in a dataset: `channels` rows (L) of
// `dim` samples (D) each.
struct ModalityLayout {
    std::string name;
    std::size_t channels = 0;
    std::size_t dim = 0;
};

// One labeled record: a row-major channels x dim array per modality, in
// the dataset's modality order.
struct MultiModalSample {
    std::vector<std::vector<double>> arrays;
    std::uint16_t label = 0;
};

struct Dataset {
    std::vector<ModalityLayout> modalities;
    std::uint32_t num_classes = 0;
    std::vector<MultiModalSample> samples;

    std::size_t size() const { return samples.size(); }
    std::size_t fusion_rows() const;

    // Checks that every sample matches the layouts, labels are in range and
    // all values are finite. Throws DataError.
    void validate() const;
};

// HSF1 binary container. Little-endian throughout:
//   magic "HSF1" | version u32 | n u32 | c u32 |
//   n x { name_len u32, name bytes, channels u32, dim u32 } | N u32 |
//   N x { per-modality row-major f64 arrays in order, label u16 }
// Round-trips are bit-exact. Malformed input raises FormatError with the
// byte offset of the failure.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

struct SynthesisParams {
    std::vector<ModalityLayout> modalities;
    std::size_t num_samples = 0;
    std::uint32_t num_classes = 2;
    double coupling = 1.0;
    std::uint64_t seed = 0;
    double noise = 0.3;
    double carrier_cycles = 2.0;
};

// Band-limited sinusoid generator with a class-dependent phase structure.
// Every sample draws a uniform class y and a uniform global phase phi;
// modality i oscillates at phase coupling*phi + theta_i(y), with
// theta_i(y) = 2*pi*(i+1)*y / (c*(n+1)). At coupling=0 each modality's
// absolute phase determines the class on its own; at coupling=1 the phase
// of any single modality is uniformly distributed regardless of class and
// only pairwise phase differences carry label information.
Dataset synthesize_dataset(const SynthesisParams& params);

// Layout used by the CLI when only a modality count is given: channel
// counts cycle through 1,2,3 and sample dims through 16,12,8.
std::vector<ModalityLayout> default_synth_layout(std::size_t n_modalities);

// JSON manifest describing how a synthetic dataset was produced.
std::string synthesis_manifest_json(const SynthesisParams& params);

// Batch index plan: ceil(N / batch_size) batches, the last one possibly
// short; with shuffle the index order is a seeded permutation.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    bool shuffle, std::uint64_t seed);

// Restriction of a dataset to a single modality (used by single-modality
// baselines and tests).
Dataset slice_modality(const Dataset& ds, std::size_t modality_index);

}  // namespace hus
