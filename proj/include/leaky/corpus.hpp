#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "leaky/config.hpp"
#include "leaky/image.hpp"

namespace leaky::corpus {

// Captions are lowercase words over a fixed character set; the text tower
// consumes character tokens so single-character edits stay in vocabulary.
//   'a'..'z' -> 0..25, ' ' -> 26, '|' -> 27
constexpr int kCharsetSize = 28;
constexpr int kSpaceToken = 26;
constexpr int kClauseToken = 27;

int char_to_token(char ch);          // throws validation error outside charset
char token_to_char(int token);
std::vector<int> tokenize(const std::string& caption);
std::string detokenize(const std::vector<int>& tokens);

struct Slot {
    std::string name;
    std::vector<std::string> values;
};

// Ordered categorical label slots rendered as "name value" clauses joined
// by " | ". Rendering is deterministic and invertible (parse below), which
// is what makes the slots informative labels.
struct CaptionTemplate {
    std::vector<Slot> slots;

    static CaptionTemplate standard();  // 8-slot shapes-on-backgrounds template

    void validate() const;
    long long combo_count() const;
    std::vector<int> decode_combo(long long index) const;
    long long encode_combo(const std::vector<int>& values) const;

    // Renders the first `active_slots` slots (all when <= 0 or >= size).
    std::string render(const std::vector<int>& values, int active_slots = 0) const;
    // Round-trips a rendered caption back to slot value indices; slots not
    // present in the caption come back as -1.
    std::vector<int> parse(const std::string& caption) const;
};

struct PairRecord {
    std::string id;
    Image image;
    std::string caption;
    std::vector<int> caption_tokens;
    std::vector<int> slot_values;  // indices into template slots
    std::string split;             // train | aux | test | nonmember
    bool member = false;
};

struct Manifest {
    CaptionTemplate caption_template;
    std::vector<PairRecord> records;

    std::vector<std::size_t> split_indices(const std::string& split) const;
    const PairRecord& by_id(const std::string& id) const;
    void validate() const;
};

struct GenOptions {
    int height = 32;
    int width = 32;
    double noise_sigma = 0.02;
    int caption_slots = 0;      // 0 -> all, -1 -> per-record uniform 1..slots
    long long combo_offset = 0; // skip this many shuffled combos (split carving)
    std::string id_prefix = "r";
    std::string split = "train";
    bool member = true;
};

// Pure function of (n, template, seed, options).
Manifest generate_synthetic(int n, const CaptionTemplate& tmpl, std::uint64_t seed,
                            const GenOptions& opts = {});

// Four-split corpus (train/test/aux/nonmember) with globally distinct slot
// combinations, so nonmember captions never occur in training.
Manifest generate_corpus(const CorpusConfig& cfg, std::uint64_t seed);

// Deterministic render of slot values (no noise); used by generation and by
// tests that need the clean image.
Image render_image(const CaptionTemplate& tmpl, const std::vector<int>& values,
                   int height, int width);

void save_manifest(const Manifest& manifest, const std::string& dir);
Manifest load_manifest(const std::string& path, bool permissive = false);

enum class PerturbKind { minor_typo, clause_reorder };

struct PerturbResult {
    std::vector<int> tokens;
    bool noop = false;
};

PerturbResult perturb_caption(const std::vector<int>& tokens, PerturbKind kind,
                              std::uint64_t seed);

}  // namespace leaky::corpus
