#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dosetime::semantic {

// Shape motif: monotonicity and convexity signs plus an extent letter.
// Bounded (b) motifs sit between transition points; u and h describe the
// terminal segment on (t, +inf), h approaching a horizontal asymptote.
enum class Extent : uint8_t { Bounded, Unbounded, Asymptote };

struct Motif {
    int mono = +1;  // +1 or -1
    int conv = +1;
    Extent extent = Extent::Bounded;

    bool operator==(const Motif&) const = default;
};

std::string motif_label(const Motif& m);       // e.g. "+-h"
Motif motif_from_label(const std::string& s);  // throws on malformed labels

// A trajectory approaching a horizontal asymptote must flatten out, which
// forces (mono, conv) in {(+,-), (-,+)}.
bool motif_valid(const Motif& m);

// Legal successor of `prev`? Adjacent motifs differ in exactly one sign:
// a convexity flip is an inflection, a monotonicity flip an extremum.
bool transition_allowed(const Motif& prev, const Motif& next);
bool transition_is_extremum(const Motif& prev, const Motif& next);

struct Composition {
    std::vector<Motif> motifs;

    int size() const { return static_cast<int>(motifs.size()); }
    std::string label() const;  // e.g. "++b,+-h"
    bool operator==(const Composition&) const = default;
};

Composition composition_from_label(const std::string& s);

// Grammar check: non-empty, all but the last motif bounded, terminal u or h,
// adjacent pairs legal, each motif valid.
bool composition_valid(const Composition& c, std::string* why = nullptr);

enum class Terminal : uint8_t { Asymptote, Unbounded, Any };

// Exhaustive, duplicate-free, length-lexicographic enumeration of valid
// compositions with at most max_motifs motifs and the requested terminal.
std::vector<Composition> enumerate_compositions(int max_motifs, Terminal terminal);

}  // namespace dosetime::semantic
