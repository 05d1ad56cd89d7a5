// Regenerates the synthetic corpora under tests/fixtures/. Deterministic:
// reruns produce byte-identical files.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "hsd/rng.hpp"

namespace fs = std::filesystem;

namespace {

struct Pools {
    std::vector<std::string> benign;
    std::vector<std::string> profanity; // -> PRFN
    std::vector<std::string> slur;      // -> HATE
    std::vector<std::string> threat;    // -> OFFN
    std::vector<std::string> hashtags;
    std::vector<std::string> emojis;
    std::vector<std::string> mentions;
};

Pools english_pools() {
    Pools p;
    p.benign = {"good",    "morning", "coffee", "weekend", "sunny",  "walk",   "park",
                "team",    "match",   "music",  "reading", "garden", "friends", "dinner",
                "photo",   "travel",  "city",   "river",   "lovely", "day",    "new",
                "update",  "release", "notes",  "today",   "plan",   "meeting", "lunch",
                "break",   "happy",   "calm",   "quiet",   "train",  "ride",   "book",
                "recipe",  "soup",    "cloud",  "rain",    "light"};
    p.profanity = {"fraktz", "shazbot", "dritnak", "blazqot"};
    p.slur = {"slurble", "slurnak", "slurgot"};
    p.threat = {"i will destroy you", "watch your back tonight", "you will regret this",
                "i will hunt you down"};
    p.hashtags = {"#WeekendVibes", "#GoodMorning", "#MatchDay", "#CityLife", "#MusicTime"};
    p.emojis = {"\xF0\x9F\x98\x80", "\xF0\x9F\x98\x82", "\xE2\x98\x95", "\xE2\x9A\xBD",
                "\xF0\x9F\x8C\x9E", "\xE2\x9D\xA4"};
    p.mentions = {"@alex", "@sam", "@jordan", "@taylor"};
    return p;
}

std::string pick(const std::vector<std::string>& v, hsd::rng::Engine& eng) {
    return v[hsd::rng::uniform_u64(eng, v.size())];
}

std::string benign_sentence(const Pools& p, hsd::rng::Engine& eng, std::size_t words) {
    std::string out;
    for (std::size_t i = 0; i < words; ++i) {
        if (i) out += ' ';
        out += pick(p.benign, eng);
    }
    return out;
}

struct Row {
    std::string id, text, t1, t2;
};

void write_corpus(const fs::path& path, const std::vector<Row>& rows) {
    std::ofstream out(path, std::ios::binary);
    out << "tweet_id\ttext\ttask_1\ttask_2\n";
    for (const auto& r : rows) out << r.id << '\t' << r.text << '\t' << r.t1 << '\t' << r.t2 << '\n';
    std::cout << "wrote " << path.string() << " (" << rows.size() << " rows)\n";
}

std::vector<Row> synthetic_corpus(const Pools& p, const std::string& prefix, std::size_t none,
                                  std::size_t hate, std::size_t offn, std::size_t prfn,
                                  std::uint64_t seed) {
    hsd::rng::Engine eng(seed);
    std::vector<Row> rows;
    std::size_t next_id = 1;
    auto make_id = [&]() {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%s%04zu", prefix.c_str(), next_id++);
        return std::string(buf);
    };
    auto decorate = [&](std::string text) {
        if (hsd::rng::uniform_unit(eng) < 0.35) text = pick(p.mentions, eng) + " " + text;
        if (hsd::rng::uniform_unit(eng) < 0.4) text += " " + pick(p.hashtags, eng);
        if (hsd::rng::uniform_unit(eng) < 0.35) text += " " + pick(p.emojis, eng);
        if (hsd::rng::uniform_unit(eng) < 0.15) text += " https://t.co/" + make_id();
        return text;
    };

    for (std::size_t i = 0; i < none; ++i)
        rows.push_back({make_id(), decorate(benign_sentence(p, eng, 6 + hsd::rng::uniform_u64(eng, 6))),
                        "NOT", "NONE"});
    for (std::size_t i = 0; i < hate; ++i) {
        std::string text = benign_sentence(p, eng, 3 + hsd::rng::uniform_u64(eng, 4)) + " " +
                           pick(p.slur, eng) + " " + benign_sentence(p, eng, 2);
        if (hsd::rng::uniform_unit(eng) < 0.5) text += " " + pick(p.slur, eng);
        rows.push_back({make_id(), decorate(text), "HOF", "HATE"});
    }
    for (std::size_t i = 0; i < offn; ++i) {
        std::string text = benign_sentence(p, eng, 2 + hsd::rng::uniform_u64(eng, 3)) + " " +
                           pick(p.threat, eng);
        rows.push_back({make_id(), decorate(text), "HOF", "OFFN"});
    }
    for (std::size_t i = 0; i < prfn; ++i) {
        std::string text = benign_sentence(p, eng, 3 + hsd::rng::uniform_u64(eng, 4)) + " " +
                           pick(p.profanity, eng) + " " + benign_sentence(p, eng, 2);
        if (hsd::rng::uniform_unit(eng) < 0.5) text += " " + pick(p.profanity, eng);
        rows.push_back({make_id(), decorate(text), "HOF", "PRFN"});
    }
    // Deterministic shuffle so classes interleave like a real export.
    hsd::rng::shuffle(rows, eng);
    return rows;
}

} // namespace

int main(int argc, char** argv) {
    fs::path out_dir = argc > 1 ? fs::path(argv[1]) : fs::path("tests/fixtures");
    fs::create_directories(out_dir);

    Pools en = english_pools();
    write_corpus(out_dir / "synthetic_train_en.tsv",
                 synthetic_corpus(en, "en", 300, 100, 100, 100, 20200816));
    write_corpus(out_dir / "synthetic_train_de.tsv",
                 synthetic_corpus(en, "de", 75, 25, 25, 25, 20200817));
    write_corpus(out_dir / "synthetic_train_hi.tsv",
                 synthetic_corpus(en, "hi", 75, 25, 25, 25, 20200818));
    return 0;
}
