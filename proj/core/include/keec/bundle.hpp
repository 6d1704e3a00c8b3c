#pragma once

#include <string>

#include "keec/koopman.hpp"
#include "keec/valuectl.hpp"

namespace keec {

// Everything a controller needs at run time: the embedding, the identified
// operators, and (once value training has run) the value head. Saved as one
// KEECBND1 file so an evaluation host needs no access to training data.
struct Bundle {
    std::string env_name;
    EmbeddingModel model;
    LatentOperators ops;
    bool has_value = false;
    ValueModel vm;  // meaningful only when has_value
};

// Atomic write (temp file + rename); CRC32 trailer like the dataset formats.
void save_bundle(const std::string& path, const Bundle& b);

// Throws IoError on missing/corrupt files or an unknown format version.
// Operator caches (exp(P dt), dt phi1(P dt)) are rebuilt on load.
Bundle load_bundle(const std::string& path);

// Loads and additionally requires the value section; StateError if the
// bundle holds only the embedding.
Bundle load_bundle_with_value(const std::string& path);

}  // namespace keec
