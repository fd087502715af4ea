#pragma once

// Synthetic corpora for end-to-end runs without licensed data. Both tasks
// tag maximal digit runs as NUM entities; filler tokens never contain digits,
// so the gold spans are exactly the maximal digit runs of the text.
//   digit-run:  printable-ASCII filler, language "synth"
//   two-script: Latin ("lat") or Cyrillic ("cyr") filler; Cyrillic letters
//               are two UTF-8 bytes each, so windows can split mid-character.

#include <fstream>
#include <string>
#include <vector>

#include "bts/data.hpp"
#include "bts/rand.hpp"

namespace bts {

struct SynthDoc {
    std::vector<std::string> tokens;
    std::vector<std::string> tags;  // BIO: B-NUM or O
};

namespace detail {

inline const std::vector<std::string>& latin_letters() {
    static const std::vector<std::string> v = [] {
        std::vector<std::string> out;
        for (char c = 'a'; c <= 'z'; ++c) out.push_back(std::string(1, c));
        for (char c = 'A'; c <= 'Z'; ++c) out.push_back(std::string(1, c));
        out.push_back(".");
        out.push_back(",");
        out.push_back("'");
        return out;
    }();
    return v;
}

inline const std::vector<std::string>& cyrillic_letters() {
    static const std::vector<std::string> v = [] {
        std::vector<std::string> out;
        // U+0430..U+044F, two bytes each in UTF-8
        for (int cp = 0x430; cp <= 0x44F; ++cp) {
            std::string s;
            s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
            out.push_back(s);
        }
        return out;
    }();
    return v;
}

inline std::string random_word(const std::vector<std::string>& alphabet, Rng& rng) {
    const int len = 2 + static_cast<int>(uniform_below(rng, 6));
    std::string w;
    for (int i = 0; i < len; ++i)
        w += alphabet[uniform_below(rng, static_cast<std::uint32_t>(alphabet.size()))];
    return w;
}

inline std::string random_digit_run(Rng& rng) {
    const int len = 1 + static_cast<int>(uniform_below(rng, 8));
    std::string d;
    for (int i = 0; i < len; ++i) d += static_cast<char>('0' + uniform_below(rng, 10));
    return d;
}

}  // namespace detail

// One document of roughly target_bytes reconstructed length. About a fifth of
// the tokens are digit runs.
inline SynthDoc gen_synth_doc(int target_bytes, const std::vector<std::string>& alphabet,
                              Rng& rng) {
    SynthDoc doc;
    int bytes = 0;
    while (true) {
        const bool digits = bernoulli(rng, 0.22);
        const std::string tok = digits ? detail::random_digit_run(rng)
                                       : detail::random_word(alphabet, rng);
        const int add = static_cast<int>(tok.size()) + (doc.tokens.empty() ? 0 : 1);
        if (bytes + add > target_bytes && !doc.tokens.empty()) break;
        doc.tokens.push_back(tok);
        doc.tags.push_back(digits ? "B-NUM" : "O");
        bytes += add;
        if (bytes >= target_bytes) break;
    }
    return doc;
}

inline std::vector<SynthDoc> gen_synth_corpus(const std::string& task, const std::string& script,
                                              int docs, int doc_bytes, Rng& rng) {
    const std::vector<std::string>* alphabet = nullptr;
    if (task == "digit-run") {
        alphabet = &detail::latin_letters();
    } else if (task == "two-script") {
        alphabet = script == "cyr" ? &detail::cyrillic_letters() : &detail::latin_letters();
    } else {
        throw std::invalid_argument("unknown synthetic task: " + task);
    }
    std::vector<SynthDoc> out;
    for (int i = 0; i < docs; ++i) out.push_back(gen_synth_doc(doc_bytes, *alphabet, rng));
    return out;
}

// CoNLL-2002 format: "token TAG" lines, documents separated by -DOCSTART-.
inline void write_conll2002(const std::vector<SynthDoc>& docs, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& doc : docs) {
        out << "-DOCSTART- O\n\n";
        for (std::size_t i = 0; i < doc.tokens.size(); ++i)
            out << doc.tokens[i] << ' ' << doc.tags[i] << '\n';
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

// In-memory view of a synthetic corpus through the same reconstruction path
// the loaders use.
inline std::vector<Document> synth_documents(const std::vector<SynthDoc>& docs,
                                             const std::string& language) {
    std::vector<Document> out;
    for (const auto& sd : docs) {
        auto [text, offsets] = reconstruct_text(sd.tokens);
        Document doc;
        doc.language = language;
        doc.id = language + ":" + std::to_string(out.size());
        doc.text = std::move(text);
        doc.spans = detail::bio_to_spans(sd.tags, offsets, "synth");
        out.push_back(std::move(doc));
    }
    return out;
}

// Replaces the given fraction of bytes outside all gold spans with random
// ASCII letters (never digits, so gold spans stay maximal digit runs).
// Meant for ASCII documents.
inline void corrupt_filler_bytes(Document& doc, double fraction, Rng& rng) {
    std::vector<bool> in_span(doc.text.size(), false);
    for (const auto& s : doc.spans)
        for (std::uint32_t i = s.start; i < s.start + s.length && i < doc.text.size(); ++i)
            in_span[i] = true;
    for (std::size_t i = 0; i < doc.text.size(); ++i) {
        if (in_span[i] || !bernoulli(rng, fraction)) continue;
        std::uint8_t repl = doc.text[i];
        while (repl == doc.text[i]) {
            const std::uint32_t r = uniform_below(rng, 52);
            repl = static_cast<std::uint8_t>(r < 26 ? 'a' + r : 'A' + (r - 26));
        }
        doc.text[i] = repl;
    }
}

}  // namespace bts
