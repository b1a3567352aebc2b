#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "groundlab/lexicon.hpp"

namespace groundlab::lang {

enum class PosTag { Noun, Adj, Prep, Room, Other };

enum class MaskMode {
    FullText,
    NoAdjectives,
    OnlyAdjNouns,
    OnlyNouns,
    NoRoom,
    OnlyRoom,
    NoNouns,
};

inline const char* to_string(PosTag t) {
    switch (t) {
        case PosTag::Noun: return "NOUN";
        case PosTag::Adj: return "ADJ";
        case PosTag::Prep: return "PREP";
        case PosTag::Room: return "ROOM";
        case PosTag::Other: return "OTHER";
    }
    return "OTHER";
}

inline PosTag pos_tag_from_string(const std::string& s) {
    if (s == "NOUN") return PosTag::Noun;
    if (s == "ADJ") return PosTag::Adj;
    if (s == "PREP") return PosTag::Prep;
    if (s == "ROOM") return PosTag::Room;
    if (s == "OTHER") return PosTag::Other;
    throw std::runtime_error("unknown pos tag: " + s);
}

inline const char* to_string(MaskMode m) {
    switch (m) {
        case MaskMode::FullText: return "full_text";
        case MaskMode::NoAdjectives: return "no_adjectives";
        case MaskMode::OnlyAdjNouns: return "only_adj_nouns";
        case MaskMode::OnlyNouns: return "only_nouns";
        case MaskMode::NoRoom: return "no_room";
        case MaskMode::OnlyRoom: return "only_room";
        case MaskMode::NoNouns: return "no_nouns";
    }
    return "full_text";
}

inline MaskMode mask_mode_from_string(const std::string& s) {
    if (s == "full_text") return MaskMode::FullText;
    if (s == "no_adjectives") return MaskMode::NoAdjectives;
    if (s == "only_adj_nouns") return MaskMode::OnlyAdjNouns;
    if (s == "only_nouns") return MaskMode::OnlyNouns;
    if (s == "no_room") return MaskMode::NoRoom;
    if (s == "only_room") return MaskMode::OnlyRoom;
    if (s == "no_nouns") return MaskMode::NoNouns;
    throw std::runtime_error("unknown text mask mode: " + s);
}

// Token <-> id bijection with PAD pinned to 0 and UNK to 1.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;

    Vocabulary() {
        add("<pad>");
        add("<unk>");
    }

    int add(const std::string& token) {
        auto it = ids_.find(token);
        if (it != ids_.end()) return it->second;
        const int id = static_cast<int>(tokens_.size());
        ids_.emplace(token, id);
        tokens_.push_back(token);
        return id;
    }

    int id_of(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return ids_.count(token) > 0; }
    const std::string& token_of(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::map<std::string, int> ids_;
    std::vector<std::string> tokens_;
};

// Referring expression with per-token POS tags. room_clause_end is the token
// index where the leading room clause stops (0 when the phrasing has no
// leading room clause).
struct Instruction {
    std::vector<int> tokens;
    std::string text;
    std::vector<PosTag> pos_tags;
    int room_clause_end = 0;

    bool operator==(const Instruction& o) const {
        return tokens == o.tokens && text == o.text && pos_tags == o.pos_tags &&
               room_clause_end == o.room_clause_end;
    }
};

inline std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

// Lowercased whitespace tokenization; unknown words map to UNK and the empty
// string yields a single UNK.
inline std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
    std::vector<int> ids;
    for (const std::string& w : split_words(text)) ids.push_back(vocab.id_of(w));
    if (ids.empty()) ids.push_back(Vocabulary::kUnk);
    return ids;
}

inline std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i > 0) out += ' ';
        out += vocab.token_of(ids[i]);
    }
    return out;
}

// Deterministic in corpus order: tokens are assigned ids in first-seen order
// after the two specials.
inline Vocabulary build_vocabulary(const std::vector<std::string>& corpus) {
    Vocabulary v;
    for (const std::string& line : corpus)
        for (const std::string& w : split_words(line)) v.add(w);
    return v;
}

namespace detail {
inline const std::vector<std::string>& template_fixed_words() {
    static const std::vector<std::string> words = {
        "go",   "walk",  "head", "to",   "and", "find", "bring", "me",  "locate",
        "fetch", "the",  "near", "in",   "from",
    };
    return words;
}
}  // namespace detail

// Canonical vocabulary covering the full generation lexicon; instructions
// produced by generate_instruction never contain UNK under this vocabulary.
inline Vocabulary default_vocabulary() {
    Vocabulary v;
    for (const auto& w : detail::template_fixed_words()) v.add(w);
    for (const auto& w : lex::kRooms) v.add(w);
    for (const auto& w : lex::kCategories) v.add(w);
    for (const auto& w : lex::kColors) v.add(w);
    for (const auto& w : lex::kSizes) v.add(w);
    for (const auto& w : lex::kMaterials) v.add(w);
    return v;
}

inline const Vocabulary& shared_default_vocabulary() {
    static const Vocabulary v = default_vocabulary();
    return v;
}

// Filters tokens by POS class. FullText is the identity; a result that would
// be empty falls back to a single UNK so downstream batches stay non-empty.
inline Instruction mask_instruction(const Instruction& instr, MaskMode mode) {
    if (mode == MaskMode::FullText) return instr;

    Instruction out;
    out.room_clause_end = 0;
    std::vector<std::string> words;
    const std::vector<std::string> src_words = split_words(instr.text);

    const auto keep = [&](std::size_t i) {
        const PosTag tag = instr.pos_tags[i];
        const bool in_room_clause = static_cast<int>(i) < instr.room_clause_end;
        switch (mode) {
            case MaskMode::FullText: return true;
            case MaskMode::NoAdjectives: return tag != PosTag::Adj;
            case MaskMode::OnlyAdjNouns: return tag == PosTag::Adj || tag == PosTag::Noun || tag == PosTag::Room;
            case MaskMode::OnlyNouns: return tag == PosTag::Noun || tag == PosTag::Room;
            case MaskMode::NoRoom: return !in_room_clause && tag != PosTag::Room;
            case MaskMode::OnlyRoom: return in_room_clause;
            case MaskMode::NoNouns: return tag != PosTag::Noun && tag != PosTag::Room;
        }
        return true;
    };

    for (std::size_t i = 0; i < instr.tokens.size(); ++i) {
        if (!keep(i)) continue;
        out.tokens.push_back(instr.tokens[i]);
        out.pos_tags.push_back(instr.pos_tags[i]);
        if (i < src_words.size()) words.push_back(src_words[i]);
        if (mode == MaskMode::OnlyRoom) out.room_clause_end = static_cast<int>(out.tokens.size());
    }
    if (out.tokens.empty()) {
        out.tokens.push_back(Vocabulary::kUnk);
        out.pos_tags.push_back(PosTag::Other);
        words.push_back("<unk>");
        out.room_clause_end = 0;
    }
    std::string text;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i > 0) text += ' ';
        text += words[i];
    }
    out.text = text;
    return out;
}

}  // namespace groundlab::lang
