#pragma once

// Input/output vocabularies and the span <-> token-sequence codec.
//
// Input tokens: BYTE(0..255), GO=256, DROP=257. Output tokens occupy one
// contiguous id range: START_0..START_k, LEN_0..LEN_k, one id per label,
// then STOP. The embedding table covers both: input ids first, then output
// ids offset by 258, because the decoder consumes output tokens as inputs.

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bts {

inline constexpr int kGoToken = 256;
inline constexpr int kDropToken = 257;
inline constexpr int kNumInputTokens = 258;

struct SpanAnnotation {
    std::uint32_t start = 0;
    std::uint32_t length = 0;
    std::string label;
    double prob = -1.0;  // < 0 means unset

    bool operator==(const SpanAnnotation& o) const {
        return start == o.start && length == o.length && label == o.label;
    }
};

inline bool span_well_formed(const SpanAnnotation& s, std::uint32_t limit) {
    return s.length >= 1 && static_cast<std::uint64_t>(s.start) + s.length <= limit;
}

struct Token {
    enum class Kind { Byte, Go, Drop, Start, Len, Label, Stop };
    Kind kind;
    int value = 0;  // byte value, position, length, or label index

    bool operator==(const Token&) const = default;
};

class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(std::uint32_t segment_size, std::vector<std::string> label_names)
        : k_(segment_size), labels_(std::move(label_names)) {
        if (labels_.empty()) throw std::invalid_argument("Vocabulary: empty label set");
        for (std::size_t i = 0; i < labels_.size(); ++i)
            for (std::size_t j = i + 1; j < labels_.size(); ++j)
                if (labels_[i] == labels_[j])
                    throw std::invalid_argument("Vocabulary: duplicate label " + labels_[i]);
    }

    std::uint32_t k() const { return k_; }
    const std::vector<std::string>& labels() const { return labels_; }

    int output_vocab_size() const {
        return 2 * (static_cast<int>(k_) + 1) + static_cast<int>(labels_.size()) + 1;
    }
    int embed_vocab_size() const { return kNumInputTokens + output_vocab_size(); }

    // Output-token ids (0-based within the output softmax).
    int out_start(std::uint32_t pos) const {
        if (pos > k_) throw std::out_of_range("out_start: position > k");
        return static_cast<int>(pos);
    }
    int out_len(std::uint32_t len) const {
        if (len > k_) throw std::out_of_range("out_len: length > k");
        return static_cast<int>(k_) + 1 + static_cast<int>(len);
    }
    int out_label(std::size_t label_idx) const {
        if (label_idx >= labels_.size()) throw std::out_of_range("out_label: bad label index");
        return 2 * (static_cast<int>(k_) + 1) + static_cast<int>(label_idx);
    }
    int out_stop() const { return 2 * (static_cast<int>(k_) + 1) + static_cast<int>(labels_.size()); }

    bool is_start(int out_id) const { return out_id >= 0 && out_id <= static_cast<int>(k_); }
    bool is_len(int out_id) const {
        return out_id > static_cast<int>(k_) && out_id <= 2 * static_cast<int>(k_) + 1;
    }
    bool is_label(int out_id) const { return out_id >= out_label(0) && out_id < out_stop(); }
    bool is_stop(int out_id) const { return out_id == out_stop(); }

    std::uint32_t start_of(int out_id) const { return static_cast<std::uint32_t>(out_id); }
    std::uint32_t len_of(int out_id) const {
        return static_cast<std::uint32_t>(out_id - static_cast<int>(k_) - 1);
    }
    std::size_t label_of(int out_id) const {
        return static_cast<std::size_t>(out_id - out_label(0));
    }

    int label_index(const std::string& name) const {
        for (std::size_t i = 0; i < labels_.size(); ++i)
            if (labels_[i] == name) return static_cast<int>(i);
        return -1;
    }

    // Embedding id of an output token; input tokens use their own id.
    int embed_id_of_output(int out_id) const { return kNumInputTokens + out_id; }

    // Unified token <-> embedding id maps, mutually inverse over all ids.
    int token_id(const Token& t) const {
        switch (t.kind) {
            case Token::Kind::Byte:
                if (t.value < 0 || t.value > 255) throw std::out_of_range("token_id: bad byte");
                return t.value;
            case Token::Kind::Go: return kGoToken;
            case Token::Kind::Drop: return kDropToken;
            case Token::Kind::Start: return kNumInputTokens + out_start(static_cast<std::uint32_t>(t.value));
            case Token::Kind::Len: return kNumInputTokens + out_len(static_cast<std::uint32_t>(t.value));
            case Token::Kind::Label: return kNumInputTokens + out_label(static_cast<std::size_t>(t.value));
            case Token::Kind::Stop: return kNumInputTokens + out_stop();
        }
        throw std::out_of_range("token_id: bad token");
    }

    Token id_token(int id) const {
        if (id >= 0 && id < 256) return {Token::Kind::Byte, id};
        if (id == kGoToken) return {Token::Kind::Go, 0};
        if (id == kDropToken) return {Token::Kind::Drop, 0};
        const int out = id - kNumInputTokens;
        if (out >= 0 && out < output_vocab_size()) {
            if (is_start(out)) return {Token::Kind::Start, static_cast<int>(start_of(out))};
            if (is_len(out)) return {Token::Kind::Len, static_cast<int>(len_of(out))};
            if (is_label(out)) return {Token::Kind::Label, static_cast<int>(label_of(out))};
            return {Token::Kind::Stop, 0};
        }
        throw std::out_of_range("id_token: unknown id " + std::to_string(id));
    }

    std::string token_name(const Token& t) const {
        switch (t.kind) {
            case Token::Kind::Byte: return "BYTE(" + std::to_string(t.value) + ")";
            case Token::Kind::Go: return "GO";
            case Token::Kind::Drop: return "DROP";
            case Token::Kind::Start: return "START_" + std::to_string(t.value);
            case Token::Kind::Len: return "LEN_" + std::to_string(t.value);
            case Token::Kind::Label: return labels_[static_cast<std::size_t>(t.value)];
            case Token::Kind::Stop: return "STOP";
        }
        return "?";
    }

private:
    std::uint32_t k_ = 0;
    std::vector<std::string> labels_;
};

// Spans -> output-token ids. Spans sorted by end position descending, ties by
// start descending then label id ascending; each emitted as START, LEN, LABEL;
// terminated by STOP. Training data must be clean: malformed spans are errors.
inline std::vector<int> encode_spans(std::vector<SpanAnnotation> spans, const Vocabulary& vocab) {
    struct Key {
        std::uint32_t end, start;
        int label;
    };
    std::vector<std::pair<Key, const SpanAnnotation*>> keyed;
    keyed.reserve(spans.size());
    for (const auto& s : spans) {
        if (!span_well_formed(s, vocab.k()))
            throw std::invalid_argument("encode_spans: malformed span (" + std::to_string(s.start) +
                                        "," + std::to_string(s.length) + "," + s.label + ")");
        const int lbl = vocab.label_index(s.label);
        if (lbl < 0) throw std::invalid_argument("encode_spans: unknown label " + s.label);
        keyed.push_back({{s.start + s.length, s.start, lbl}, &s});
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
        if (a.first.end != b.first.end) return a.first.end > b.first.end;
        if (a.first.start != b.first.start) return a.first.start > b.first.start;
        return a.first.label < b.first.label;
    });
    std::vector<int> out;
    out.reserve(3 * spans.size() + 1);
    for (const auto& [key, s] : keyed) {
        out.push_back(vocab.out_start(s->start));
        out.push_back(vocab.out_len(s->length));
        out.push_back(vocab.out_label(static_cast<std::size_t>(key.label)));
    }
    out.push_back(vocab.out_stop());
    return out;
}

struct DecodeResult {
    std::vector<SpanAnnotation> spans;
    // Index of the START token of each emitted span, parallel to spans.
    std::vector<std::size_t> triple_starts;
    int dropped = 0;  // discarded partial or malformed triples
    bool saw_stop = false;
};

// Output-token ids -> spans. Greedy scan for maximal START,LEN,LABEL triples;
// a token that breaks the pattern discards the partial triple and the scan
// resumes at the offending token; malformed triples (length 0 or out of range)
// are dropped. Stops at the first STOP.
inline DecodeResult decode_tokens(const std::vector<int>& tokens, const Vocabulary& vocab) {
    DecodeResult res;
    enum class Expect { Start, Len, Label };
    Expect state = Expect::Start;
    std::uint32_t cur_start = 0, cur_len = 0;
    std::size_t cur_begin = 0;

    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const int t = tokens[i];
        if (t < 0 || t >= vocab.output_vocab_size())
            throw std::out_of_range("decode_tokens: id outside output vocabulary");
        if (vocab.is_stop(t)) {
            if (state != Expect::Start) res.dropped++;
            res.saw_stop = true;
            return res;
        }
        if (vocab.is_start(t)) {
            if (state != Expect::Start) res.dropped++;  // abandon partial, restart here
            cur_start = vocab.start_of(t);
            cur_begin = i;
            state = Expect::Len;
            continue;
        }
        if (vocab.is_len(t)) {
            if (state == Expect::Len) {
                cur_len = vocab.len_of(t);
                state = Expect::Label;
            } else {
                if (state == Expect::Label) res.dropped++;
                state = Expect::Start;  // stray LEN cannot begin a triple
            }
            continue;
        }
        // label token
        if (state == Expect::Label) {
            SpanAnnotation s{cur_start, cur_len, vocab.labels()[vocab.label_of(t)], -1.0};
            if (span_well_formed(s, vocab.k())) {
                res.spans.push_back(std::move(s));
                res.triple_starts.push_back(cur_begin);
            } else {
                res.dropped++;
            }
        } else if (state == Expect::Len) {
            res.dropped++;
        }
        state = Expect::Start;
    }
    if (state != Expect::Start) res.dropped++;  // ran off the end mid-triple
    return res;
}

}  // namespace bts
