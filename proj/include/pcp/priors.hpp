#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pcp/linalg.hpp"
#include "pcp/rng.hpp"

namespace pcp {

// Class-level concept prior table: probs(m, k) = P(concept m | class k).
// This is the sole supervision source for concept learning.
struct PriorTable {
    std::vector<std::string> concept_names; // M unique names
    std::vector<std::string> class_names;   // L unique names, L >= 2
    Matrix probs;                           // M x L, entries in [0,1]

    std::size_t concept_count() const { return concept_names.size(); }
    std::size_t class_count() const { return class_names.size(); }

    double prob(std::size_t concept_idx, std::size_t class_idx) const {
        return probs(concept_idx, class_idx);
    }

    // Column P(. | class k) as a length-M vector.
    Vec class_column(std::size_t class_idx) const;

    // Index of a concept name; throws DimensionError if unknown.
    std::size_t concept_index(const std::string& name) const;

    // Throws on any invariant violation (range, uniqueness, degeneracy).
    void validate() const;
};

// Partition of concept indices into mutually exclusive groups; concepts not
// referenced by any group are singletons.
struct ConceptGroup {
    std::string name;
    std::vector<std::size_t> members; // >= 2 members
};

struct ConceptGroups {
    std::vector<ConceptGroup> groups;
    std::vector<std::size_t> singletons;

    // Validates the partition against a table with M concepts.
    void validate(std::size_t concept_count) const;

    // All-singletons partition.
    static ConceptGroups all_singletons(std::size_t concept_count);
};

// Binary surrogate concept vector sampled from class priors; stands in for
// the unobserved per-sample concept labels during training.
struct SurrogateVector {
    Vec bits; // entries exactly 0.0 or 1.0
    std::size_t source_class = 0;
};

PriorTable load_priors(const std::string& path);
PriorTable parse_priors_csv(const std::string& text, const std::string& origin);
std::string serialize_priors_csv(const PriorTable& table);
void save_priors(const PriorTable& table, const std::string& path);

ConceptGroups load_groups(const std::string& path, const PriorTable& table);
ConceptGroups parse_groups_json(const std::string& text, const PriorTable& table,
                                const std::string& origin);
std::string serialize_groups_json(const PriorTable& table, const ConceptGroups& groups);

// bits[m] ~ Bernoulli(P(c_m | y)) independently per concept.
SurrogateVector sample_surrogate(const PriorTable& table, std::size_t y, Rng& rng);

} // namespace pcp
