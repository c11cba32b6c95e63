#include "dosetime/motif.hpp"

#include <stdexcept>

namespace dosetime::semantic {

std::string motif_label(const Motif& m) {
    std::string s;
    s += m.mono > 0 ? '+' : '-';
    s += m.conv > 0 ? '+' : '-';
    s += m.extent == Extent::Bounded ? 'b' : (m.extent == Extent::Unbounded ? 'u' : 'h');
    return s;
}

Motif motif_from_label(const std::string& s) {
    if (s.size() != 3) throw std::invalid_argument("bad motif label: " + s);
    Motif m;
    if (s[0] == '+')
        m.mono = +1;
    else if (s[0] == '-')
        m.mono = -1;
    else
        throw std::invalid_argument("bad motif label: " + s);
    if (s[1] == '+')
        m.conv = +1;
    else if (s[1] == '-')
        m.conv = -1;
    else
        throw std::invalid_argument("bad motif label: " + s);
    if (s[2] == 'b')
        m.extent = Extent::Bounded;
    else if (s[2] == 'u')
        m.extent = Extent::Unbounded;
    else if (s[2] == 'h')
        m.extent = Extent::Asymptote;
    else
        throw std::invalid_argument("bad motif label: " + s);
    return m;
}

bool motif_valid(const Motif& m) {
    if (m.extent == Extent::Asymptote) return m.mono != m.conv;
    return true;
}

bool transition_allowed(const Motif& prev, const Motif& next) {
    const bool mono_flip = prev.mono != next.mono;
    const bool conv_flip = prev.conv != next.conv;
    if (mono_flip == conv_flip) return false;  // exactly one sign changes
    if (conv_flip) return true;                // inflection
    // Extremum: a maximum needs rising-concave before and falling-concave
    // after; a minimum the mirror image. So the shared convexity must oppose
    // the incoming monotonicity.
    return prev.conv == -prev.mono;
}

bool transition_is_extremum(const Motif& prev, const Motif& next) {
    return prev.mono != next.mono;
}

std::string Composition::label() const {
    std::string s;
    for (int i = 0; i < size(); ++i) {
        if (i) s += ',';
        s += motif_label(motifs[static_cast<size_t>(i)]);
    }
    return s;
}

Composition composition_from_label(const std::string& s) {
    Composition c;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        c.motifs.push_back(motif_from_label(s.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return c;
}

bool composition_valid(const Composition& c, std::string* why) {
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    if (c.motifs.empty()) return fail("empty composition");
    for (const auto& m : c.motifs)
        if (!motif_valid(m)) return fail("invalid motif " + motif_label(m));
    for (int i = 0; i + 1 < c.size(); ++i) {
        if (c.motifs[static_cast<size_t>(i)].extent != Extent::Bounded)
            return fail("non-terminal motif must be bounded");
        if (!transition_allowed(c.motifs[static_cast<size_t>(i)], c.motifs[static_cast<size_t>(i + 1)]))
            return fail("illegal transition " + motif_label(c.motifs[static_cast<size_t>(i)]) +
                        " -> " + motif_label(c.motifs[static_cast<size_t>(i + 1)]));
    }
    if (c.motifs.back().extent == Extent::Bounded) return fail("terminal motif must be u or h");
    return true;
}

namespace {

// Canonical motif order for deterministic enumeration.
const std::vector<Motif>& alphabet() {
    static const std::vector<Motif> a = [] {
        std::vector<Motif> v;
        for (int mono : {+1, -1})
            for (int conv : {+1, -1})
                for (Extent e : {Extent::Bounded, Extent::Unbounded, Extent::Asymptote}) {
                    Motif m{mono, conv, e};
                    if (motif_valid(m)) v.push_back(m);
                }
        return v;
    }();
    return a;
}

void extend(std::vector<Motif>& prefix, int remaining, Terminal terminal,
            std::vector<Composition>& out) {
    for (const Motif& m : alphabet()) {
        if (!prefix.empty() && !transition_allowed(prefix.back(), m)) continue;
        if (m.extent == Extent::Bounded) continue;  // terminals handled below
        const bool ok = terminal == Terminal::Any ||
                        (terminal == Terminal::Asymptote && m.extent == Extent::Asymptote) ||
                        (terminal == Terminal::Unbounded && m.extent == Extent::Unbounded);
        if (!ok) continue;
        prefix.push_back(m);
        out.push_back(Composition{prefix});
        prefix.pop_back();
    }
    if (remaining <= 1) return;
    for (const Motif& m : alphabet()) {
        if (m.extent != Extent::Bounded) continue;
        if (!prefix.empty() && !transition_allowed(prefix.back(), m)) continue;
        prefix.push_back(m);
        extend(prefix, remaining - 1, terminal, out);
        prefix.pop_back();
    }
}

}  // namespace

std::vector<Composition> enumerate_compositions(int max_motifs, Terminal terminal) {
    if (max_motifs < 1) throw std::invalid_argument("max_motifs must be >= 1");
    std::vector<Composition> out;
    for (int len = 1; len <= max_motifs; ++len) {
        std::vector<Composition> of_len;
        std::vector<Motif> prefix;
        // Collect only compositions of exactly this length.
        std::vector<Composition> all;
        extend(prefix, len, terminal, all);
        for (auto& c : all)
            if (c.size() == len) of_len.push_back(std::move(c));
        out.insert(out.end(), of_len.begin(), of_len.end());
    }
    return out;
}

}  // namespace dosetime::semantic
