#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "dosetime/motif.hpp"

using namespace dosetime::semantic;

namespace {

// Independent brute-force oracle: every sequence over the 10-letter motif
// alphabet, filtered by the transition table written out literally.
std::set<std::string> brute_force(int max_motifs, char terminal) {
    const std::vector<std::string> all = {"++b", "+-b", "-+b", "--b", "++u",
                                          "+-u", "-+u", "--u", "+-h", "-+h"};
    auto ok_pair = [](const std::string& a, const std::string& b) {
        const std::string key = a.substr(0, 2) + ">" + b.substr(0, 2);
        static const std::set<std::string> allowed = {
            "++>+-",  // inflection
            "+->++",  // inflection
            "+->--",  // maximum
            "-->-+",  // inflection
            "-+>--",  // inflection
            "-+>++",  // minimum
        };
        return allowed.count(key) > 0;
    };
    std::set<std::string> out;
    std::vector<std::vector<std::string>> seqs{{}};
    for (int len = 1; len <= max_motifs; ++len) {
        std::vector<std::vector<std::string>> next;
        for (const auto& s : seqs)
            for (const auto& m : all) {
                if (!s.empty() && !ok_pair(s.back(), m)) continue;
                auto t = s;
                t.push_back(m);
                next.push_back(t);
            }
        seqs = next;
        for (const auto& s : seqs) {
            bool valid = true;
            for (size_t i = 0; i + 1 < s.size(); ++i)
                if (s[i].back() != 'b') valid = false;
            const char last = s.back().back();
            if (last == 'b') valid = false;
            if (terminal != 'a' && last != terminal) valid = false;
            if (!valid) continue;
            std::string label;
            for (size_t i = 0; i < s.size(); ++i) {
                if (i) label += ',';
                label += s[i];
            }
            out.insert(label);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("single-motif asymptote library is exactly {+-h, -+h}") {
    const auto lib = enumerate_compositions(1, Terminal::Asymptote);
    REQUIRE(lib.size() == 2);
    CHECK(lib[0].label() == "+-h");
    CHECK(lib[1].label() == "-+h");
}

TEST_CASE("asymptote-terminal library up to 4 motifs has 12 compositions (2+2+4+4)") {
    const auto lib = enumerate_compositions(4, Terminal::Asymptote);
    CHECK(lib.size() == 12);
    int by_len[5] = {0, 0, 0, 0, 0};
    for (const auto& c : lib) by_len[c.size()] += 1;
    CHECK(by_len[1] == 2);
    CHECK(by_len[2] == 2);
    CHECK(by_len[3] == 4);
    CHECK(by_len[4] == 4);

    SUBCASE("matches the brute-force oracle exactly") {
        const auto oracle = brute_force(4, 'h');
        std::set<std::string> got;
        for (const auto& c : lib) got.insert(c.label());
        CHECK(got == oracle);
    }

    SUBCASE("no duplicates, deterministic order") {
        std::set<std::string> seen;
        for (const auto& c : lib) CHECK(seen.insert(c.label()).second);
        const auto again = enumerate_compositions(4, Terminal::Asymptote);
        REQUIRE(again.size() == lib.size());
        for (size_t i = 0; i < lib.size(); ++i) CHECK(lib[i].label() == again[i].label());
    }
}

TEST_CASE("any-terminal library is a valid superset of the asymptote one") {
    const auto any2 = enumerate_compositions(2, Terminal::Any);
    const auto h2 = enumerate_compositions(2, Terminal::Asymptote);
    std::set<std::string> any_labels;
    for (const auto& c : any2) any_labels.insert(c.label());
    for (const auto& c : h2) CHECK(any_labels.count(c.label()) == 1);
    CHECK(any2.size() > h2.size());
    for (const auto& c : any2) {
        std::string why;
        CHECK_MESSAGE(composition_valid(c, &why), why);
    }
    CHECK(any_labels == brute_force(2, 'a'));
}

TEST_CASE("full any-terminal library matches brute force at every length") {
    for (int len = 1; len <= 5; ++len) {
        const auto lib = enumerate_compositions(len, Terminal::Any);
        std::set<std::string> got;
        for (const auto& c : lib) got.insert(c.label());
        CHECK(got == brute_force(len, 'a'));
    }
    CHECK(enumerate_compositions(4, Terminal::Unbounded).size() ==
          brute_force(4, 'u').size());
}

TEST_CASE("grammar rejections") {
    CHECK(!composition_valid(composition_from_label("++b")));     // bounded terminal
    CHECK(!composition_valid(composition_from_label("++h,+-h"))); // ++h is not a motif
    CHECK(!composition_valid(composition_from_label("++b,--u"))); // illegal transition
    CHECK(!composition_valid(Composition{}));
    std::string why;
    CHECK(!composition_valid(composition_from_label("+-b,-+h"), &why));
    CHECK(why.find("transition") != std::string::npos);
}

TEST_CASE("motif labels round-trip") {
    for (const std::string s : {"++b", "+-h", "-+u", "--b"})
        CHECK(motif_label(motif_from_label(s)) == s);
    CHECK_THROWS(motif_from_label("xyz"));
    CHECK_THROWS(motif_from_label("+-x"));
}
