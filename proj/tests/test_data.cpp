#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "bts/data.hpp"
#include "bts/synth.hpp"

using namespace bts;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content) {
        path = (std::filesystem::temp_directory_path() / name).string();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

// Independent BIO oracle: an entity begins at token i when tag[i] is B-X, or
// I-X with no continuing B-X/I-X immediately before; it extends through the
// following I-X tokens of the same type.
std::vector<SpanAnnotation> bio_oracle(const std::vector<std::string>& tags,
                                       const std::vector<std::pair<std::size_t, std::size_t>>& off) {
    auto type_of = [](const std::string& t) { return t.size() > 2 ? t.substr(2) : std::string(); };
    std::vector<SpanAnnotation> spans;
    for (std::size_t i = 0; i < tags.size(); ++i) {
        if (tags[i] == "O") continue;
        const bool continues = tags[i][0] == 'I' && i > 0 && tags[i - 1] != "O" &&
                               type_of(tags[i - 1]) == type_of(tags[i]);
        if (continues) continue;
        std::size_t j = i;
        while (j + 1 < tags.size() && tags[j + 1][0] == 'I' &&
               type_of(tags[j + 1]) == type_of(tags[i]))
            ++j;
        spans.push_back({static_cast<std::uint32_t>(off[i].first),
                         static_cast<std::uint32_t>(off[j].second - off[i].first),
                         type_of(tags[i]), -1.0});
    }
    return spans;
}

}  // namespace

TEST_CASE("reconstruct_text basics and multibyte arithmetic") {
    auto [text, off] = reconstruct_text({"a", "b"});
    CHECK(std::string(text.begin(), text.end()) == "a b");
    CHECK(off == std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {2, 3}});

    auto [t2, off2] = reconstruct_text({"\xCE\x94", "x"});  // Greek delta, 2 bytes
    CHECK(t2.size() == 4);
    CHECK(off2 == std::vector<std::pair<std::size_t, std::size_t>>{{0, 2}, {3, 4}});

    CHECK_THROWS(reconstruct_text({"a\nb"}));
    CHECK_THROWS(reconstruct_text({}));
}

TEST_CASE("reconstruct_text offsets agree with a substring-search oracle") {
    Rng rng(5);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<std::string> tokens;
        const int n = 1 + static_cast<int>(uniform_below(rng, 12));
        for (int i = 0; i < n; ++i) {
            std::string tok;
            const int len = 1 + static_cast<int>(uniform_below(rng, 6));
            for (int c = 0; c < len; ++c)
                tok += static_cast<char>('a' + uniform_below(rng, 26));
            tokens.push_back(tok);
        }
        auto [text, off] = reconstruct_text(tokens);
        const std::string s(text.begin(), text.end());
        std::size_t from = 0;
        for (int i = 0; i < n; ++i) {
            const std::size_t pos = s.find(tokens[static_cast<std::size_t>(i)], from);
            REQUIRE(pos == off[static_cast<std::size_t>(i)].first);
            from = off[static_cast<std::size_t>(i)].second;
        }
    }
}

TEST_CASE("conll2003 loader: documents, text, spans") {
    TempFile f("bts_c03.txt",
               "-DOCSTART- -X- -X- O\n"
               "\n"
               "John NNP B-NP B-PER\n"
               "lives VBZ B-VP O\n"
               "\n"
               "-DOCSTART- -X- -X- O\n"
               "\n"
               "Acme NNP B-NP B-ORG\n"
               "Corp NNP I-NP I-ORG\n"
               "Labs NNP I-NP B-ORG\n");
    auto docs = load_conll2003(f.path, "en");
    REQUIRE(docs.size() == 2);
    CHECK(std::string(docs[0].text.begin(), docs[0].text.end()) == "John lives");
    REQUIRE(docs[0].spans.size() == 1);
    CHECK(docs[0].spans[0] == SpanAnnotation{0, 4, "PER", -1});
    CHECK(docs[0].id == "en:0");

    // B-ORG I-ORG B-ORG gives two adjacent ORG spans.
    REQUIRE(docs[1].spans.size() == 2);
    CHECK(docs[1].spans[0] == SpanAnnotation{0, 9, "ORG", -1});   // "Acme Corp"
    CHECK(docs[1].spans[1] == SpanAnnotation{10, 4, "ORG", -1});  // "Labs"
}

TEST_CASE("loaders: empty file, malformed line, unknown tag") {
    TempFile empty("bts_empty.txt", "");
    CHECK(load_conll2003(empty.path).empty());
    CHECK(load_conll2002(empty.path).empty());
    CHECK(load_conllu(empty.path).empty());

    TempFile bad("bts_bad.txt", "only-one-column\n");
    CHECK_THROWS_WITH_AS(load_conll2003(bad.path), doctest::Contains(":1"), std::runtime_error);

    TempFile badtag("bts_badtag.txt", "word Q-PER\n");
    CHECK_THROWS_WITH_AS(load_conll2002(badtag.path), doctest::Contains("Q-PER"),
                         std::runtime_error);
}

TEST_CASE("conll2002 loader handles both one-document files and -DOCSTART- splits") {
    TempFile plain("bts_c02a.txt", "Hola O\n12 B-NUM\n");
    auto docs = load_conll2002(plain.path, "es");
    REQUIRE(docs.size() == 1);
    CHECK(docs[0].spans == std::vector<SpanAnnotation>{{5, 2, "NUM", -1}});

    TempFile multi("bts_c02b.txt", "-DOCSTART- O\na O\n\n-DOCSTART- O\nb O\nc B-X\n");
    auto docs2 = load_conll2002(multi.path, "es");
    REQUIRE(docs2.size() == 2);
    CHECK(std::string(docs2[1].text.begin(), docs2[1].text.end()) == "b c");
}

TEST_CASE("conllu loader: comments, ranges and empty nodes skipped, UPOS spans") {
    TempFile f("bts_u.conllu",
               "# newdoc id = x\n"
               "# text = vamonos ya\n"
               "1-2\tvamonos\t_\t_\t_\t_\t_\t_\t_\t_\n"
               "1\tvamos\tir\tVERB\t_\t_\t0\troot\t_\t_\n"
               "2\tnos\tnosotros\tPRON\t_\t_\t1\tobj\t_\t_\n"
               "2.1\tghost\t_\t_\t_\t_\t_\t_\t_\t_\n"
               "\n"
               "1\tya\tya\tADV\t_\t_\t0\troot\t_\t_\n");
    auto docs = load_conllu(f.path, "es");
    REQUIRE(docs.size() == 1);
    CHECK(std::string(docs[0].text.begin(), docs[0].text.end()) == "vamos nos ya");
    REQUIRE(docs[0].spans.size() == 3);
    CHECK(docs[0].spans[0] == SpanAnnotation{0, 5, "VERB", -1});
    CHECK(docs[0].spans[1] == SpanAnnotation{6, 3, "PRON", -1});
    CHECK(docs[0].spans[2] == SpanAnnotation{10, 2, "ADV", -1});

    TempFile bad("bts_u_bad.conllu", "1\tword\tonly\tfour\n");
    CHECK_THROWS_WITH_AS(load_conllu(bad.path), doctest::Contains("10"), std::runtime_error);
}

TEST_CASE("BIO conversion agrees with an independent oracle on random tag streams") {
    Rng rng(41);
    const std::vector<std::string> types = {"PER", "LOC", "ORG"};
    for (int rep = 0; rep < 100000 / 20; ++rep) {
        const int n = 1 + static_cast<int>(uniform_below(rng, 20));
        std::vector<std::string> tokens, tags;
        for (int i = 0; i < n; ++i) {
            tokens.push_back("t" + std::to_string(i));
            const std::uint32_t r = uniform_below(rng, 7);
            if (r < 3) {
                tags.push_back("O");
            } else {
                tags.push_back(std::string(r % 2 ? "B-" : "I-") + types[uniform_below(rng, 3)]);
            }
        }
        auto [text, off] = reconstruct_text(tokens);
        (void)text;
        auto got = detail::bio_to_spans(tags, off, "test");
        auto want = bio_oracle(tags, off);
        REQUIRE(got == want);
    }
}

TEST_CASE("make_segments: window count, containment, short-document padding") {
    Document doc;
    doc.text.assign(62, 'x');
    doc.spans = {{59, 5, "PER", -1}};
    auto segs = make_segments(doc, 60, 1);
    REQUIRE(segs.size() == 3);  // 62 - 60 + 1
    CHECK(segs[0].doc_offset == 0);
    CHECK(segs[2].doc_offset == 2);

    // (59,5) crosses the window at offset 0 but fits at offsets >= 4.
    CHECK(segs[0].spans.empty());

    Document wide;
    wide.text.assign(120, 'x');
    wide.spans = {{59, 5, "PER", -1}};
    auto wsegs = make_segments(wide, 60, 30);
    REQUIRE(wsegs.size() == 3);  // offsets 0, 30, 60
    CHECK(wsegs[0].spans.empty());
    REQUIRE(wsegs[1].spans.size() == 1);
    CHECK(wsegs[1].spans[0] == SpanAnnotation{29, 5, "PER", -1});
    CHECK(wsegs[2].spans.empty());  // starts at 59 < 60

    Document tiny;
    tiny.text = {'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j'};
    tiny.spans = {{2, 3, "LOC", -1}};
    auto tsegs = make_segments(tiny, 60, 1);
    REQUIRE(tsegs.size() == 1);
    CHECK(tsegs[0].bytes.size() == 60);
    CHECK(tsegs[0].bytes[9] == 'j');
    CHECK(tsegs[0].bytes[10] == 0);
    CHECK(tsegs[0].spans == std::vector<SpanAnnotation>{{2, 3, "LOC", -1}});
}

TEST_CASE("every gold span lands in some window when stride <= k - max span length") {
    Rng rng(43);
    for (int rep = 0; rep < 50; ++rep) {
        Document doc;
        doc.text.assign(200 + uniform_below(rng, 300), 'x');
        std::uint32_t max_len = 0;
        for (int s = 0; s < 20; ++s) {
            const std::uint32_t len = 1 + uniform_below(rng, 20);
            const std::uint32_t start = uniform_below(rng, static_cast<std::uint32_t>(doc.text.size()) - len);
            doc.spans.push_back({start, len, "X", -1});
            max_len = std::max(max_len, len);
        }
        const std::uint32_t k = 60;
        const std::uint32_t stride = std::max<std::uint32_t>(1, k - max_len);
        auto segs = make_segments(doc, k, stride);
        for (const auto& gold : doc.spans) {
            bool found = false;
            for (const auto& seg : segs) {
                for (const auto& s : seg.spans) {
                    if (s.start + seg.doc_offset == gold.start && s.length == gold.length) {
                        found = true;
                        break;
                    }
                }
            }
            // Tail truncation can drop spans only when the last window cannot
            // reach the document end; the stride above guarantees coverage of
            // every span that ends by the last window's end.
            const std::size_t last_end = segs.back().doc_offset + k;
            if (gold.start + gold.length <= last_end) REQUIRE(found);
        }
    }
}

TEST_CASE("byte dropout: identity at p=0, binomial concentration, inputs only") {
    TrainingSegment seg;
    seg.bytes = {'a', 'b', 'c'};
    seg.spans = {{0, 2, "X", -1}};
    Rng rng(3);
    auto ids = apply_byte_dropout(seg, 0.0, rng);
    CHECK(ids == std::vector<int>{'a', 'b', 'c'});
    CHECK_THROWS(apply_byte_dropout(seg, 1.0, rng));

    TrainingSegment big;
    big.bytes.assign(1000000, 'q');
    auto dropped = apply_byte_dropout(big, 0.2, rng);
    std::size_t count = 0;
    for (const int id : dropped)
        if (id == kDropToken) count++;
    const double frac = static_cast<double>(count) / 1e6;
    CHECK(frac == doctest::Approx(0.2).epsilon(0.01));
    CHECK(std::abs(frac - 0.2) < 0.002);

    // Spans are untouched by construction; the segment itself is const.
    CHECK(seg.spans == std::vector<SpanAnnotation>{{0, 2, "X", -1}});
}

TEST_CASE("batch encoding: target lengths and padding behave as 3|S|+1") {
    Vocabulary vocab(60, {"NUM"});
    TrainingSegment a, b;
    a.bytes.assign(60, 'x');
    b.bytes.assign(60, 'y');
    b.spans = {{0, 2, "NUM", -1}, {5, 3, "NUM", -1}};
    Rng rng(1);
    auto batch = make_batch({&a, &b}, vocab, 0.0, rng);
    REQUIRE(batch.targets.size() == 2);
    CHECK(batch.targets[0] == std::vector<int>{vocab.out_stop()});
    CHECK(batch.targets[0].size() == 1);
    CHECK(batch.targets[1].size() == 7);

    CHECK_THROWS(make_batch({}, vocab, 0.0, rng));
}

TEST_CASE("language mix across batches tracks corpus proportions") {
    // Pool with a 3:1 language ratio.
    std::vector<std::string> langs;
    for (int i = 0; i < 3000; ++i) langs.push_back("lat");
    for (int i = 0; i < 1000; ++i) langs.push_back("cyr");

    Rng rng(7);
    std::size_t lat_seen = 0, total = 0;
    std::vector<std::size_t> order(langs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    int batches = 0;
    while (batches < 1000) {
        shuffle(order, rng);
        for (std::size_t at = 0; at + 32 <= order.size() && batches < 1000; at += 32, ++batches) {
            for (std::size_t j = at; j < at + 32; ++j) {
                lat_seen += langs[order[j]] == "lat";
                total++;
            }
        }
    }
    const double frac = static_cast<double>(lat_seen) / static_cast<double>(total);
    CHECK(std::abs(frac - 0.75) < 0.05);
}

TEST_CASE("synthetic corpus: gold spans are exactly the maximal digit runs") {
    Rng rng(11);
    auto docs = gen_synth_corpus("digit-run", "", 30, 200, rng);
    auto loaded = synth_documents(docs, "synth");
    REQUIRE(loaded.size() == 30);
    for (const auto& doc : loaded) {
        // Regex-style oracle: maximal runs of [0-9] in the text.
        std::vector<SpanAnnotation> runs;
        const auto& t = doc.text;
        for (std::size_t i = 0; i < t.size();) {
            if (t[i] >= '0' && t[i] <= '9') {
                std::size_t j = i;
                while (j < t.size() && t[j] >= '0' && t[j] <= '9') ++j;
                runs.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j - i),
                                "NUM", -1.0});
                i = j;
            } else {
                ++i;
            }
        }
        REQUIRE(doc.spans == runs);
    }

    // Writer/loader round trip preserves documents.
    const std::string path =
        (std::filesystem::temp_directory_path() / "bts_synth_rt.conll").string();
    write_conll2002(docs, path);
    auto reloaded = load_conll2002(path, "synth");
    std::remove(path.c_str());
    REQUIRE(reloaded.size() == loaded.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        CHECK(reloaded[i].text == loaded[i].text);
        CHECK(reloaded[i].spans == loaded[i].spans);
    }
}

TEST_CASE("two-script corpus exercises multibyte UTF-8") {
    Rng rng(13);
    auto docs = synth_documents(gen_synth_corpus("two-script", "cyr", 5, 150, rng), "cyr");
    bool multibyte = false;
    for (const auto& doc : docs)
        for (const std::uint8_t b : doc.text)
            if (b >= 0x80) multibyte = true;
    CHECK(multibyte);
}

TEST_CASE("filler corruption stays outside gold spans and keeps runs maximal") {
    Rng rng(17);
    auto docs = synth_documents(gen_synth_corpus("digit-run", "", 10, 300, rng), "synth");
    for (auto doc : docs) {
        const auto before = doc.spans;
        const auto original = doc.text;
        corrupt_filler_bytes(doc, 0.1, rng);
        CHECK(doc.spans == before);
        std::size_t changed = 0;
        for (std::size_t i = 0; i < doc.text.size(); ++i)
            if (doc.text[i] != original[i]) {
                changed++;
                CHECK((std::isalpha(doc.text[i]) != 0));
            }
        CHECK(changed > 0);
        for (const auto& s : doc.spans) {
            for (std::uint32_t i = s.start; i < s.start + s.length; ++i)
                CHECK(doc.text[i] == original[i]);
            // Neighbours of a span are never digits, so runs stay maximal.
            if (s.start > 0) CHECK(!isdigit(doc.text[s.start - 1]));
            if (s.start + s.length < doc.text.size()) CHECK(!isdigit(doc.text[s.start + s.length]));
        }
    }
}
