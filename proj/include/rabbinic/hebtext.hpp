#pragma once

// Unicode normalization, Hebrew character classes and abbreviation-aware
// pretokenization.
//
// Rabbinic texts mark abbreviations with an apostrophe (apocopation: אמרי')
// or a double quote before the final letter (acronym: עכ"ל). A plain
// BERT-style splitter turns every such mark into its own token; here a mark
// that belongs to an abbreviation stays attached to its letters.

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rabbinic/common.hpp"

namespace rabbinic::hebtext {

enum class TokenKind { Word, AbbrevApocopation, AbbrevAcronym, Punctuation, Number, Other };

enum class MarkClass { Apostrophe, DoubleQuote, NotAMark };

enum class Abbreviation { Acronym, Apocopation, NotAbbreviation };

inline std::string_view to_string(TokenKind k) {
  switch (k) {
    case TokenKind::Word: return "Word";
    case TokenKind::AbbrevApocopation: return "AbbrevApocopation";
    case TokenKind::AbbrevAcronym: return "AbbrevAcronym";
    case TokenKind::Punctuation: return "Punctuation";
    case TokenKind::Number: return "Number";
    case TokenKind::Other: return "Other";
  }
  return "?";
}

/// One entry per character boundary of the normalized text, including the
/// end boundary. Normalized offsets are strictly increasing; original offsets
/// are non-decreasing (characters produced by one composition segment all
/// map to the segment start).
struct SourceMapEntry {
  std::size_t normalized;
  std::size_t original;
  bool operator==(const SourceMapEntry&) const = default;
};

struct NormalizedText {
  std::string text;
  std::vector<SourceMapEntry> source_map;
};

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

struct RawToken {
  std::string text;
  Span span;
  TokenKind kind = TokenKind::Word;
  bool operator==(const RawToken&) const = default;
};

struct PretokenizeOptions {
  /// false reproduces the plain splitter: every mark is its own token.
  bool abbreviations = true;
};

// ---------------------------------------------------------------------------
// Character helpers

inline constexpr bool is_hebrew_letter(char32_t c) { return c >= 0x05D0 && c <= 0x05EA; }

/// Total over all code points. Normalization folds every variant to ASCII,
/// but the raw variants are recognized too.
inline constexpr MarkClass mark_class(char32_t c) {
  switch (c) {
    case U'\'':
    case 0x05F3:
    case 0x2018:
    case 0x2019:
      return MarkClass::Apostrophe;
    case U'"':
    case 0x05F4:
    case 0x201C:
    case 0x201D:
      return MarkClass::DoubleQuote;
    default:
      return MarkClass::NotAMark;
  }
}

inline constexpr bool is_mark(char32_t c) { return mark_class(c) != MarkClass::NotAMark; }

namespace detail {

struct Decoded {
  char32_t cp;
  std::size_t next;
};

/// Ill-formed sequences decode to U+FFFD, consuming one byte.
inline Decoded decode_at(std::string_view s, std::size_t i) {
  UChar32 c = 0;
  auto pos = static_cast<int32_t>(i);
  U8_NEXT(s.data(), pos, static_cast<int32_t>(s.size()), c);
  if (c < 0) c = 0xFFFD;
  return {static_cast<char32_t>(c), static_cast<std::size_t>(pos)};
}

inline Decoded decode_before(std::string_view s, std::size_t i) {
  UChar32 c = 0;
  auto pos = static_cast<int32_t>(i);
  U8_PREV(s.data(), 0, pos, c);
  if (c < 0) c = 0xFFFD;
  return {static_cast<char32_t>(c), static_cast<std::size_t>(pos)};
}

inline void append_utf8(std::string& out, char32_t c) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool error = false;
  U8_APPEND(buf, len, U8_MAX_LENGTH, static_cast<UChar32>(c), error);
  if (error) {
    out.append("\xEF\xBF\xBD");
    return;
  }
  out.append(buf, static_cast<std::size_t>(len));
}

inline char32_t fold_mark(char32_t c) {
  switch (mark_class(c)) {
    case MarkClass::Apostrophe: return U'\'';
    case MarkClass::DoubleQuote: return U'"';
    case MarkClass::NotAMark: return c;
  }
  return c;
}

/// Nikud and cantillation: the nonspacing marks in U+0591..U+05C7. Maqaf,
/// paseq, sof pasuq and nun hafukha in that block are punctuation and stay.
inline bool is_hebrew_point(char32_t c) {
  return c >= 0x0591 && c <= 0x05C7 && u_charType(static_cast<UChar32>(c)) == U_NON_SPACING_MARK;
}

/// Code points that are their own NFC form when they stand alone in a
/// segment and need no point stripping.
inline bool passes_through(char32_t c) {
  return c < 0x0300 || is_hebrew_letter(c) || (c >= 0x05F0 && c <= 0x05F4) || (c >= 0x2010 && c <= 0x206F);
}

struct Normalizers {
  const icu::Normalizer2* nfc;
  const icu::Normalizer2* nfd;
};

inline const Normalizers& normalizers() {
  static const Normalizers n = [] {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    const icu::Normalizer2* nfd = icu::Normalizer2::getNFDInstance(status);
    if (U_FAILURE(status)) throw Error(std::string("ICU normalizer unavailable: ") + u_errorName(status));
    return Normalizers{nfc, nfd};
  }();
  return n;
}

enum class CharClass { Space, HebrewLetter, Mark, Letter, Digit, Combining, Punct, Other };

inline CharClass char_class(char32_t c) {
  if (is_hebrew_letter(c)) return CharClass::HebrewLetter;
  if (is_mark(c)) return CharClass::Mark;
  const auto cp = static_cast<UChar32>(c);
  if (u_isUWhiteSpace(cp)) return CharClass::Space;
  switch (u_charType(cp)) {
    case U_UPPERCASE_LETTER:
    case U_LOWERCASE_LETTER:
    case U_TITLECASE_LETTER:
    case U_MODIFIER_LETTER:
    case U_OTHER_LETTER:
      return CharClass::Letter;
    case U_DECIMAL_DIGIT_NUMBER:
    case U_LETTER_NUMBER:
    case U_OTHER_NUMBER:
      return CharClass::Digit;
    case U_NON_SPACING_MARK:
    case U_ENCLOSING_MARK:
    case U_COMBINING_SPACING_MARK:
      return CharClass::Combining;
    case U_DASH_PUNCTUATION:
    case U_START_PUNCTUATION:
    case U_END_PUNCTUATION:
    case U_CONNECTOR_PUNCTUATION:
    case U_OTHER_PUNCTUATION:
    case U_INITIAL_PUNCTUATION:
    case U_FINAL_PUNCTUATION:
    case U_MATH_SYMBOL:
    case U_CURRENCY_SYMBOL:
    case U_MODIFIER_SYMBOL:
    case U_OTHER_SYMBOL:
      return CharClass::Punct;
    default:
      return CharClass::Other;
  }
}

/// "Letter" for the apocopation look-ahead: any letter or combining mark.
inline bool continues_word(char32_t c) {
  const auto k = char_class(c);
  return k == CharClass::HebrewLetter || k == CharClass::Letter || k == CharClass::Combining;
}

inline bool in_abbrev_run(char32_t c) { return is_hebrew_letter(c) || is_mark(c); }

/// Result of analysing one maximal run of Hebrew letters and marks.
/// [core_begin, core_end) is the abbreviation token when kind != NotAbbreviation;
/// mark_at is the byte offset of its mark.
struct RunAnalysis {
  Abbreviation kind = Abbreviation::NotAbbreviation;
  std::size_t core_begin = 0;
  std::size_t core_end = 0;
  std::size_t mark_at = 0;
};

/// The run is [begin, end) in `text`, already maximal. Rules:
///  - leading marks are never part of an abbreviation;
///  - a trailing lone double quote, or any trailing group of two or more
///    marks, is stripped as punctuation;
///  - what remains must hold exactly one mark: a double quote strictly
///    between Hebrew letters (acronym), or a final apostrophe that is not
///    followed by a letter or combining mark (apocopation).
inline RunAnalysis analyze_run(std::string_view text, std::size_t begin, std::size_t end) {
  struct Cp {
    char32_t c;
    std::size_t at;
  };
  std::vector<Cp> cps;
  for (std::size_t i = begin; i < end;) {
    auto d = decode_at(text, i);
    cps.push_back({d.cp, i});
    i = d.next;
  }
  RunAnalysis none;
  const std::size_t n = cps.size();
  std::size_t lead = 0;
  while (lead < n && is_mark(cps[lead].c)) ++lead;
  if (lead == n) return none;
  std::size_t trail = 0;
  while (trail < n - lead && is_mark(cps[n - 1 - trail].c)) ++trail;
  std::size_t strip = 0;
  if (trail >= 2) {
    strip = trail;
  } else if (trail == 1 && mark_class(cps[n - 1].c) == MarkClass::DoubleQuote) {
    strip = 1;
  }
  const std::size_t first = lead;
  const std::size_t last = n - strip;  // one past
  std::size_t marks = 0;
  std::size_t mark_idx = 0;
  for (std::size_t k = first; k < last; ++k) {
    if (is_mark(cps[k].c)) {
      ++marks;
      mark_idx = k;
    }
  }
  if (marks != 1) return none;

  const std::size_t core_end = last == n ? end : cps[last].at;
  const bool followed_by_word = core_end < text.size() && continues_word(decode_at(text, core_end).cp);
  if (followed_by_word) return none;

  RunAnalysis out;
  out.core_begin = cps[first].at;
  out.core_end = core_end;
  out.mark_at = cps[mark_idx].at;
  if (mark_class(cps[mark_idx].c) == MarkClass::DoubleQuote) {
    // The mark is interior, so letters sit on both sides.
    if (mark_idx == last - 1) return none;
    out.kind = Abbreviation::Acronym;
  } else {
    if (mark_idx != last - 1) return none;
    out.kind = Abbreviation::Apocopation;
  }
  return out;
}

inline std::pair<std::size_t, std::size_t> abbrev_run_around(std::string_view text, std::size_t index) {
  std::size_t b = index;
  while (b > 0) {
    auto d = decode_before(text, b);
    if (!in_abbrev_run(d.cp)) break;
    b = d.next;
  }
  std::size_t e = index;
  while (e < text.size()) {
    auto d = decode_at(text, e);
    if (!in_abbrev_run(d.cp)) break;
    e = d.next;
  }
  return {b, e};
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// NFC composition, removal of Hebrew points, and folding of geresh,
/// gershayim and typographic quotes to ASCII ' and ". Idempotent.
inline NormalizedText normalize(std::string_view raw) {
  const auto& norms = detail::normalizers();
  NormalizedText out;
  out.text.reserve(raw.size());
  out.source_map.reserve(raw.size() + 1);

  auto emit = [&](char32_t c, std::size_t original) {
    out.source_map.push_back({out.text.size(), original});
    detail::append_utf8(out.text, detail::fold_mark(c));
  };

  std::size_t i = 0;
  while (i < raw.size()) {
    // A segment is a code point plus everything up to the next NFC boundary.
    const std::size_t seg_begin = i;
    auto first = detail::decode_at(raw, i);
    std::size_t seg_end = first.next;
    std::size_t count = 1;
    while (seg_end < raw.size()) {
      auto d = detail::decode_at(raw, seg_end);
      if (norms.nfc->hasBoundaryBefore(static_cast<UChar32>(d.cp))) break;
      seg_end = d.next;
      ++count;
    }
    i = seg_end;

    if (count == 1 && detail::passes_through(first.cp)) {
      emit(first.cp, seg_begin);
      continue;
    }

    UErrorCode status = U_ZERO_ERROR;
    icu::UnicodeString seg;
    for (std::size_t j = seg_begin; j < seg_end;) {
      auto d = detail::decode_at(raw, j);
      seg.append(static_cast<UChar32>(d.cp));
      j = d.next;
    }
    icu::UnicodeString decomposed = norms.nfd->normalize(seg, status);
    icu::UnicodeString stripped;
    for (int32_t k = 0; k < decomposed.length();) {
      const UChar32 c = decomposed.char32At(k);
      if (!detail::is_hebrew_point(static_cast<char32_t>(c))) stripped.append(c);
      k += U16_LENGTH(c);
    }
    icu::UnicodeString composed = norms.nfc->normalize(stripped, status);
    if (U_FAILURE(status)) throw Error(std::string("normalization failed: ") + u_errorName(status));
    for (int32_t k = 0; k < composed.length();) {
      const UChar32 c = composed.char32At(k);
      emit(static_cast<char32_t>(c), seg_begin);
      k += U16_LENGTH(c);
    }
  }
  out.source_map.push_back({out.text.size(), raw.size()});
  return out;
}

/// Whether the mark at byte `index` belongs to an abbreviation.
/// Throws ContractError if `index` does not start a mark character.
inline Abbreviation classify_mark(std::string_view text, std::size_t index) {
  if (index >= text.size()) throw ContractError("classify_mark: index out of range");
  const auto d = detail::decode_at(text, index);
  if (!is_mark(d.cp)) throw ContractError("classify_mark: no mark at byte " + std::to_string(index));
  const auto [b, e] = detail::abbrev_run_around(text, index);
  const auto run = detail::analyze_run(text, b, e);
  if (run.kind != Abbreviation::NotAbbreviation && run.mark_at == index) return run.kind;
  return Abbreviation::NotAbbreviation;
}

inline Abbreviation classify_mark(const NormalizedText& text, std::size_t index) {
  return classify_mark(std::string_view(text.text), index);
}

/// Splits on whitespace; inside a whitespace-free stretch separates Hebrew
/// letter runs, other letter runs, digit runs and single punctuation or
/// symbol characters. Abbreviation marks stay with their letters.
inline std::vector<RawToken> pretokenize(std::string_view text, PretokenizeOptions opts = {}) {
  using detail::CharClass;
  std::vector<RawToken> tokens;

  auto push = [&](std::size_t b, std::size_t e, TokenKind kind) {
    tokens.push_back(RawToken{std::string(text.substr(b, e - b)), Span{b, e}, kind});
  };
  // Combining marks extend an adjacent previous token, if any.
  auto extend_or_push = [&](std::size_t b, std::size_t e) {
    if (!tokens.empty() && tokens.back().span.end == b) {
      auto& t = tokens.back();
      t.text.append(text.substr(b, e - b));
      t.span.end = e;
    } else {
      push(b, e, TokenKind::Other);
    }
  };
  auto split_plain = [&](std::size_t b, std::size_t e) {
    // Hebrew letter runs become words, marks become punctuation.
    std::size_t i = b;
    while (i < e) {
      auto d = detail::decode_at(text, i);
      if (is_mark(d.cp)) {
        push(i, d.next, TokenKind::Punctuation);
        i = d.next;
        continue;
      }
      std::size_t j = d.next;
      while (j < e) {
        auto n = detail::decode_at(text, j);
        if (!is_hebrew_letter(n.cp)) break;
        j = n.next;
      }
      push(i, j, TokenKind::Word);
      i = j;
    }
  };

  std::size_t i = 0;
  while (i < text.size()) {
    const auto d = detail::decode_at(text, i);
    const auto cls = detail::char_class(d.cp);
    switch (cls) {
      case CharClass::Space:
        i = d.next;
        break;
      case CharClass::HebrewLetter:
      case CharClass::Mark: {
        std::size_t e = d.next;
        while (e < text.size()) {
          auto n = detail::decode_at(text, e);
          if (!detail::in_abbrev_run(n.cp)) break;
          e = n.next;
        }
        detail::RunAnalysis run;
        if (opts.abbreviations) run = detail::analyze_run(text, i, e);
        if (run.kind == Abbreviation::NotAbbreviation) {
          split_plain(i, e);
        } else {
          split_plain(i, run.core_begin);
          push(run.core_begin, run.core_end,
               run.kind == Abbreviation::Acronym ? TokenKind::AbbrevAcronym : TokenKind::AbbrevApocopation);
          split_plain(run.core_end, e);
        }
        i = e;
        break;
      }
      case CharClass::Letter:
      case CharClass::Digit: {
        std::size_t e = d.next;
        while (e < text.size()) {
          auto n = detail::decode_at(text, e);
          const auto k = detail::char_class(n.cp);
          if (k != cls && k != CharClass::Combining) break;
          e = n.next;
        }
        push(i, e, cls == CharClass::Letter ? TokenKind::Word : TokenKind::Number);
        i = e;
        break;
      }
      case CharClass::Combining:
        extend_or_push(i, d.next);
        i = d.next;
        break;
      case CharClass::Punct:
        push(i, d.next, TokenKind::Punctuation);
        i = d.next;
        break;
      case CharClass::Other:
        push(i, d.next, TokenKind::Other);
        i = d.next;
        break;
    }
  }
  return tokens;
}

inline std::vector<RawToken> pretokenize(const NormalizedText& text, PretokenizeOptions opts = {}) {
  return pretokenize(std::string_view(text.text), opts);
}

/// normalize + pretokenize, keeping only the token texts.
inline std::vector<std::string> token_texts(std::string_view raw, PretokenizeOptions opts = {}) {
  const auto norm = normalize(raw);
  std::vector<std::string> out;
  for (auto& t : pretokenize(norm, opts)) out.push_back(std::move(t.text));
  return out;
}

}  // namespace rabbinic::hebtext
