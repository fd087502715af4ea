#pragma once

// Corpus ingestion and segment generation. CoNLL-style files carry tokens,
// not raw text, so documents are reconstructed by joining tokens with single
// spaces; BIO tags become byte spans over that text. Training examples are
// fixed-size byte windows slid across each document.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bts/rand.hpp"
#include "bts/vocab.hpp"

namespace bts {

struct Document {
    std::string id;
    std::vector<std::uint8_t> text;
    std::vector<SpanAnnotation> spans;  // document-relative
    std::string language;
};

struct TrainingSegment {
    std::vector<std::uint8_t> bytes;    // exactly k bytes (NUL padded if short)
    std::vector<SpanAnnotation> spans;  // segment-relative, fully contained
    int doc_index = -1;
    std::size_t doc_offset = 0;
};

// Tokens joined with single ASCII spaces; returns the byte text plus the
// [start, end) byte range of every token.
inline std::pair<std::vector<std::uint8_t>, std::vector<std::pair<std::size_t, std::size_t>>>
reconstruct_text(const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw std::invalid_argument("reconstruct_text: no tokens");
    std::vector<std::uint8_t> text;
    std::vector<std::pair<std::size_t, std::size_t>> offsets;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string& tok = tokens[i];
        if (tok.empty()) throw std::invalid_argument("reconstruct_text: empty token");
        if (tok.find('\n') != std::string::npos)
            throw std::invalid_argument("reconstruct_text: token contains a newline");
        if (i > 0) text.push_back(' ');
        const std::size_t start = text.size();
        text.insert(text.end(), tok.begin(), tok.end());
        offsets.emplace_back(start, text.size());
    }
    return {std::move(text), std::move(offsets)};
}

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string f;
    while (ss >> f) out.push_back(f);
    return out;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t tab = line.find('\t', pos);
        if (tab == std::string::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, tab - pos));
        pos = tab + 1;
    }
}

inline std::string chomp(std::string line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    return line;
}

// BIO tag stream -> spans over reconstructed token offsets. An I-X with no
// open span of type X is repaired as a span start (conlleval convention).
inline std::vector<SpanAnnotation> bio_to_spans(
    const std::vector<std::string>& tags,
    const std::vector<std::pair<std::size_t, std::size_t>>& offsets,
    const std::string& where) {
    std::vector<SpanAnnotation> spans;
    int open = -1;  // index of the first token of the open span
    std::string open_type;
    auto close = [&](std::size_t upto_token) {
        if (open < 0) return;
        const std::size_t start = offsets[static_cast<std::size_t>(open)].first;
        const std::size_t end = offsets[upto_token].second;
        spans.push_back({static_cast<std::uint32_t>(start),
                         static_cast<std::uint32_t>(end - start), open_type, -1.0});
        open = -1;
    };
    for (std::size_t i = 0; i < tags.size(); ++i) {
        const std::string& tag = tags[i];
        if (tag == "O") {
            close(i == 0 ? 0 : i - 1);
        } else if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
            const std::string type = tag.substr(2);
            if (tag[0] == 'B' || open < 0 || type != open_type) {
                close(i == 0 ? 0 : i - 1);
                open = static_cast<int>(i);
                open_type = type;
            }
        } else {
            throw std::runtime_error(where + ": unknown tag '" + tag + "'");
        }
    }
    if (open >= 0) close(tags.size() - 1);
    return spans;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline bool is_docstart(const std::string& line) {
    return line.rfind("-DOCSTART-", 0) == 0;
}

}  // namespace detail

// Shared column-format reader. column_count: expected fields per line;
// token_col / tag_col: which fields carry the word form and the BIO tag.
// Documents split on -DOCSTART- lines when present, otherwise one document
// per file. Blank lines separate sentences and are otherwise ignored.
inline std::vector<Document> load_conll_columns(const std::string& path, std::size_t column_count,
                                                std::size_t token_col, std::size_t tag_col,
                                                const std::string& language) {
    const std::string content = detail::read_file(path);
    std::vector<Document> docs;
    std::vector<std::string> tokens, tags;

    auto flush = [&]() {
        if (tokens.empty()) return;
        auto [text, offsets] = reconstruct_text(tokens);
        Document doc;
        doc.language = language;
        doc.id = language + ":" + std::to_string(docs.size());
        doc.text = std::move(text);
        doc.spans = detail::bio_to_spans(tags, offsets, path);
        docs.push_back(std::move(doc));
        tokens.clear();
        tags.clear();
    };

    std::istringstream stream(content);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(stream, raw)) {
        ++line_no;
        const std::string line = detail::chomp(raw);
        if (line.empty()) continue;  // sentence break
        if (detail::is_docstart(line)) {
            flush();
            continue;
        }
        const auto fields = detail::split_ws(line);
        if (fields.size() != column_count)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(column_count) + " columns, got " +
                                     std::to_string(fields.size()));
        tokens.push_back(fields[token_col]);
        tags.push_back(fields[tag_col]);
    }
    flush();
    return docs;
}

// CoNLL-2003: token POS chunk NER, -DOCSTART- delimited.
inline std::vector<Document> load_conll2003(const std::string& path,
                                            const std::string& language = "all") {
    return load_conll_columns(path, 4, 0, 3, language);
}

// CoNLL-2002: token NER.
inline std::vector<Document> load_conll2002(const std::string& path,
                                            const std::string& language = "all") {
    return load_conll_columns(path, 2, 0, 1, language);
}

// CoNLL-U: 10 tab-separated columns, UPOS in column 4. Comment lines start
// with '#'; multiword-token ranges (1-2) and empty nodes (1.1) are skipped.
// Every syntactic word becomes a span (start, bytelen, UPOS).
inline std::vector<Document> load_conllu(const std::string& path,
                                         const std::string& language = "all") {
    const std::string content = detail::read_file(path);
    std::vector<std::string> tokens, upos;
    std::istringstream stream(content);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(stream, raw)) {
        ++line_no;
        const std::string line = detail::chomp(raw);
        if (line.empty() || line[0] == '#') continue;
        const auto fields = detail::split_tabs(line);
        if (fields.size() != 10)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected 10 tab-separated columns, got " +
                                     std::to_string(fields.size()));
        const std::string& id = fields[0];
        if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) continue;
        if (fields[1].empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty form");
        tokens.push_back(fields[1]);
        upos.push_back(fields[3]);
    }
    if (tokens.empty()) return {};
    auto [text, offsets] = reconstruct_text(tokens);
    Document doc;
    doc.language = language;
    doc.id = language + ":0";
    doc.text = std::move(text);
    for (std::size_t i = 0; i < tokens.size(); ++i)
        doc.spans.push_back({static_cast<std::uint32_t>(offsets[i].first),
                             static_cast<std::uint32_t>(offsets[i].second - offsets[i].first),
                             upos[i], -1.0});
    return {doc};
}

// Sliding windows of k bytes at the given stride. Each window keeps only the
// spans it fully contains, re-based to window coordinates. A document shorter
// than k yields one window padded on the right with NUL bytes.
inline std::vector<TrainingSegment> make_segments(const Document& doc, std::uint32_t k,
                                                  std::uint32_t stride, int doc_index = -1) {
    if (k < 1 || stride < 1) throw std::invalid_argument("make_segments: k and stride must be >= 1");
    std::vector<TrainingSegment> segments;

    auto emit = [&](std::size_t offset) {
        TrainingSegment seg;
        seg.doc_index = doc_index;
        seg.doc_offset = offset;
        const std::size_t avail = doc.text.size() > offset ? doc.text.size() - offset : 0;
        const std::size_t take = std::min<std::size_t>(avail, k);
        seg.bytes.assign(doc.text.begin() + static_cast<std::ptrdiff_t>(offset),
                         doc.text.begin() + static_cast<std::ptrdiff_t>(offset + take));
        seg.bytes.resize(k, 0);  // NUL never occurs in natural text
        for (const auto& s : doc.spans) {
            if (s.start >= offset && s.start + s.length <= offset + k) {
                SpanAnnotation local = s;
                local.start = static_cast<std::uint32_t>(s.start - offset);
                seg.spans.push_back(local);
            }
        }
        segments.push_back(std::move(seg));
    };

    if (doc.text.size() < k) {
        emit(0);
        return segments;
    }
    for (std::size_t offset = 0; offset + k <= doc.text.size(); offset += stride) emit(offset);
    return segments;
}

// Byte-dropout: each input byte independently becomes DROP with probability p;
// span annotations are untouched. Returns embedding-space input ids.
inline std::vector<int> apply_byte_dropout(const TrainingSegment& segment, double p, Rng& rng) {
    if (p < 0 || p >= 1) throw std::invalid_argument("apply_byte_dropout: p must be in [0, 1)");
    std::vector<int> ids(segment.bytes.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
        ids[i] = (p > 0 && bernoulli(rng, p)) ? kDropToken : static_cast<int>(segment.bytes[i]);
    return ids;
}

struct Batch {
    std::vector<std::vector<int>> inputs;    // embedding-space ids, uniform length
    std::vector<std::vector<int>> targets;   // output-space ids, each ends with STOP
    std::vector<const TrainingSegment*> segments;
};

// Encodes targets for a range of segments; byte-dropout applied when p > 0.
inline Batch make_batch(const std::vector<const TrainingSegment*>& segments,
                        const Vocabulary& vocab, double p_bytedrop, Rng& rng) {
    if (segments.empty()) throw std::invalid_argument("make_batch: empty batch");
    Batch batch;
    batch.segments = segments;
    for (const TrainingSegment* seg : segments) {
        batch.inputs.push_back(apply_byte_dropout(*seg, p_bytedrop, rng));
        batch.targets.push_back(encode_spans(seg->spans, vocab));
    }
    return batch;
}

// Collect the label inventory of a corpus, sorted for determinism.
inline std::vector<std::string> collect_labels(const std::vector<Document>& docs) {
    std::vector<std::string> labels;
    for (const auto& doc : docs)
        for (const auto& s : doc.spans)
            if (std::find(labels.begin(), labels.end(), s.label) == labels.end())
                labels.push_back(s.label);
    std::sort(labels.begin(), labels.end());
    return labels;
}

// All training segments of a document set.
inline std::vector<TrainingSegment> segment_corpus(const std::vector<Document>& docs,
                                                   std::uint32_t k, std::uint32_t stride) {
    std::vector<TrainingSegment> all;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        auto segs = make_segments(docs[d], k, stride, static_cast<int>(d));
        for (auto& s : segs) all.push_back(std::move(s));
    }
    return all;
}

}  // namespace bts
