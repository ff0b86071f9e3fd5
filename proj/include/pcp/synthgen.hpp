#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pcp/linalg.hpp"
#include "pcp/priors.hpp"
#include "pcp/rng.hpp"

namespace pcp {

// Generative description of a synthetic benchmark task with known priors
// and ground-truth concepts: x = A c_true + Normal(0, noise_sigma^2 I).
struct SynthSpec {
    PriorTable priors;       // carries concept/class names and P(c_m | y)
    ConceptGroups groups;    // grouped concepts sample categorically
    std::size_t feature_dim = 16;
    Matrix mixing;           // D x M; empty = draw i.i.d. uniform [-1,1] from seed
    double noise_sigma = 0.1;
    std::size_t n_samples = 3000;
    Vec class_balance;       // length-L simplex

    void validate() const;
    std::string to_json() const;
    static SynthSpec from_json(const std::string& text);
};

struct SynthSample {
    Vec x;
    std::size_t y = 0;
    Vec c_true; // held out from training, evaluation only
};

// Training-path record: carries no concept bits by construction, so the
// trainer cannot read the ground truth.
struct Example {
    Vec x;
    std::size_t y = 0;
};

struct SynthDataset {
    std::vector<std::string> concept_names;
    std::vector<std::string> class_names;
    std::vector<SynthSample> train;
    std::vector<SynthSample> val;
    std::vector<SynthSample> test;
};

// Deterministic per (spec, seed); 70/15/15 split stratified by class.
SynthDataset generate(const SynthSpec& spec, std::uint64_t seed);

std::vector<Example> to_examples(std::span<const SynthSample> samples);

// Empirical P(c_m | y) over the given samples; errors on an empty class.
PriorTable effective_priors(std::span<const SynthSample> samples,
                            const std::vector<std::string>& concept_names,
                            const std::vector<std::string>& class_names);
PriorTable effective_priors(const SynthDataset& dataset);

// JSON-lines, one `{"x":[...],"y":int,"c":[0/1,...]}` object per sample.
std::string serialize_samples_jsonl(std::span<const SynthSample> samples);
std::vector<SynthSample> parse_samples_jsonl(const std::string& text, const std::string& origin);

void save_dataset(const SynthDataset& dataset, const std::string& dir);
// Reads train/val/test.jsonl; the "c" field may be absent (x,y-only data).
SynthDataset load_dataset_dir(const std::string& dir);

SynthSpec load_synth_spec(const std::string& path);

// The frozen default benchmark task: 3 classes, 12 concepts in two groups
// plus singletons, 16 features, noise 0.1, 3000 samples.
SynthSpec default_synth_spec();

} // namespace pcp
