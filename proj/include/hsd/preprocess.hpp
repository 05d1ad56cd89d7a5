#pragma once

#include <array>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hsd/ingest.hpp"
#include "hsd/utf8.hpp"

namespace hsd {

// Decomposition of one tweet into cleaned text plus typed entity channels.
// Entity lists preserve left-to-right order of appearance.
struct TweetParts {
    std::string cleaned_text;
    std::vector<std::string> hashtags; // '#'-stripped, original case
    std::vector<std::vector<std::string>> segmented_hashtags;
    std::vector<std::string> emojis;
    std::vector<std::string> smileys;
    std::vector<std::string> urls;
    std::vector<std::string> mentions; // '@' retained
    std::vector<std::string> numbers;
    std::vector<std::string> reserved;
};

struct CleanerOptions {
    std::set<std::string> reserved_words = {"RT", "FAV"};
};

namespace detail {

struct CodepointRange {
    char32_t lo, hi;
};

// Emoji blocks covered by the extractor. Variation selectors, ZWJ and the
// keycap combiner are stripped without being recorded.
inline constexpr std::array<CodepointRange, 11> kEmojiRanges = {{
    {0x1F300, 0x1F5FF}, // misc symbols and pictographs
    {0x1F600, 0x1F64F}, // emoticons
    {0x1F680, 0x1F6FF}, // transport and map
    {0x1F780, 0x1F7FF}, // geometric shapes extended
    {0x1F900, 0x1F9FF}, // supplemental symbols and pictographs
    {0x1FA70, 0x1FAFF}, // symbols and pictographs extended-A
    {0x1F1E6, 0x1F1FF}, // regional indicators (flags)
    {0x2600, 0x26FF},   // misc symbols
    {0x2700, 0x27BF},   // dingbats
    {0x2B50, 0x2B50},   // star
    {0x2B55, 0x2B55},   // heavy circle
}};

inline bool is_emoji(char32_t cp) {
    for (const auto& r : kEmojiRanges)
        if (cp >= r.lo && cp <= r.hi) return true;
    return false;
}

inline bool is_invisible_joiner(char32_t cp) {
    return cp == 0xFE0E || cp == 0xFE0F || cp == 0x200D || cp == 0x20E3;
}

inline const std::set<std::string>& smiley_patterns() {
    static const std::set<std::string> s = {
        ":)",  ":-)", ":(",  ":-(", ";)",  ";-)", ":D",  ":-D", ":P",  ":-P",
        ":p",  ":-p", ":/",  ":-/", ":|",  ":-|", ":o",  ":O",  ":-o", ":-O",
        "=)",  "=(",  ":'(", ":'-(", "<3", "</3", "xD",  "XD",  ":*",  ";D"};
    return s;
}

inline bool is_ascii_punct(char32_t cp) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
}

inline bool is_word_char(char32_t cp) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') ||
           (cp >= '0' && cp <= '9') || cp == '_';
}

inline bool is_digit(char32_t cp) { return cp >= '0' && cp <= '9'; }

inline bool all_punct(const std::vector<char32_t>& cps) {
    for (char32_t cp : cps)
        if (!is_ascii_punct(cp)) return false;
    return !cps.empty();
}

inline bool is_number_token(const std::vector<char32_t>& cps) {
    bool seen_digit = false, seen_dot = false;
    for (std::size_t i = 0; i < cps.size(); ++i) {
        if (is_digit(cps[i])) {
            seen_digit = true;
        } else if (cps[i] == '.' && !seen_dot && i > 0 && i + 1 < cps.size()) {
            seen_dot = true;
        } else {
            return false;
        }
    }
    return seen_digit;
}

inline bool starts_with_insensitive(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        char a = s[i], b = prefix[i];
        if (a >= 'A' && a <= 'Z') a = static_cast<char>(a - 'A' + 'a');
        if (a != b) return false;
    }
    return true;
}

inline bool is_url_token(std::string_view tok) {
    return starts_with_insensitive(tok, "http://") ||
           starts_with_insensitive(tok, "https://") || starts_with_insensitive(tok, "www.");
}

inline std::string strip_trailing_punct(std::string_view tok) {
    std::size_t end = tok.size();
    while (end > 0) {
        char c = tok[end - 1];
        if (c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' ||
            c == ')' || c == '(' || c == '\'' || c == '"')
            --end;
        else
            break;
    }
    return std::string(tok.substr(0, end));
}

} // namespace detail

// Splits a raw tweet into whitespace tokens with emojis already pulled out.
// For Hindi, surviving plain-text tokens are further split on ':', ',', ';'
// (URL tokens are kept whole so the scheme separator survives).
inline TweetParts decompose(std::string_view text, Lang language,
                            const CleanerOptions& options = {}) {
    TweetParts parts;
    std::vector<std::string> cleaned_tokens;

    std::vector<std::string> raw_tokens;
    {
        std::string cur;
        std::size_t i = 0;
        while (i < text.size()) {
            char c = text[i];
            if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
                if (!cur.empty()) raw_tokens.push_back(std::move(cur));
                cur.clear();
                ++i;
            } else {
                cur.push_back(c);
                ++i;
            }
        }
        if (!cur.empty()) raw_tokens.push_back(std::move(cur));
    }

    std::function<void(const std::string&)> process_token = [&](const std::string& raw) {
        // Pull emojis out first; they can sit flush against words.
        std::vector<char32_t> kept;
        {
            std::size_t i = 0;
            while (i < raw.size()) {
                char32_t cp = utf8::next(raw, i);
                if (detail::is_emoji(cp))
                    parts.emojis.push_back(utf8::encode_one(cp));
                else if (!detail::is_invisible_joiner(cp))
                    kept.push_back(cp);
            }
        }
        if (kept.empty()) return;
        std::string tok = utf8::encode(kept);

        if (options.reserved_words.count(tok)) {
            parts.reserved.push_back(tok);
            return;
        }
        if (detail::is_url_token(tok)) {
            parts.urls.push_back(detail::strip_trailing_punct(tok));
            return;
        }
        if (detail::smiley_patterns().count(tok)) {
            parts.smileys.push_back(tok);
            return;
        }
        if (tok[0] == '@' && tok.size() > 1) {
            std::size_t end = 1;
            while (end < tok.size() && detail::is_word_char(static_cast<unsigned char>(tok[end])))
                ++end;
            if (end > 1) {
                parts.mentions.push_back(tok.substr(0, end));
                std::string rest = tok.substr(end);
                auto rest_cps = utf8::decode(rest);
                if (!rest.empty() && !detail::all_punct(rest_cps)) process_token(rest);
                return;
            }
        }
        if (tok[0] == '#' && tok.size() > 1) {
            // Tag body runs to the first ASCII punctuation; non-ASCII letters
            // (e.g. Devanagari) are part of the tag.
            std::vector<char32_t> cps = utf8::decode(tok);
            std::size_t end = 1;
            while (end < cps.size() &&
                   (detail::is_word_char(cps[end]) || cps[end] >= 0x80))
                ++end;
            if (end > 1) {
                std::vector<char32_t> body(cps.begin() + 1, cps.begin() + static_cast<std::ptrdiff_t>(end));
                parts.hashtags.push_back(utf8::encode(body));
                std::vector<char32_t> rest(cps.begin() + static_cast<std::ptrdiff_t>(end), cps.end());
                if (!rest.empty() && !detail::all_punct(rest)) process_token(utf8::encode(rest));
                return;
            }
        }
        std::string depunct = detail::strip_trailing_punct(tok);
        if (!depunct.empty() && detail::is_number_token(utf8::decode(depunct))) {
            parts.numbers.push_back(depunct);
            return;
        }
        if (detail::all_punct(kept)) return;
        cleaned_tokens.push_back(tok);
    };

    for (const auto& raw : raw_tokens) {
        if (language == Lang::hi && !detail::is_url_token(raw)) {
            std::string cur;
            for (std::size_t i = 0; i < raw.size();) {
                char c = raw[i];
                if (c == ':' || c == ',' || c == ';') {
                    if (!cur.empty()) process_token(cur);
                    cur.clear();
                    ++i;
                } else {
                    cur.push_back(c);
                    ++i;
                }
            }
            if (!cur.empty()) process_token(cur);
        } else {
            process_token(raw);
        }
    }

    std::string joined;
    for (std::size_t i = 0; i < cleaned_tokens.size(); ++i) {
        if (i) joined += ' ';
        joined += cleaned_tokens[i];
    }
    parts.cleaned_text = std::move(joined);
    return parts;
}

} // namespace hsd
