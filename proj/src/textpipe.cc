// phonest/textpipe.cc

// Copyright 2026  The phonest authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "phonest/textpipe.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "phonest/checkpoint.h"
#include "phonest/common.h"
#include "phonest/metrics.h"

namespace phonest {

std::vector<uint32_t> utf8_decode(const std::string& s) {
  std::vector<uint32_t> out;
  size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int extra;
    uint32_t cp;
    if (b0 < 0x80) {
      extra = 0;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      extra = 1;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      extra = 2;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      extra = 3;
      cp = b0 & 0x07;
    } else {
      throw ParseError("invalid utf-8 lead byte at offset " +
                       std::to_string(i));
    }
    if (i + static_cast<size_t>(extra) >= s.size())
      throw ParseError("truncated utf-8 sequence at offset " +
                       std::to_string(i));
    for (int k = 1; k <= extra; ++k) {
      const auto b = static_cast<unsigned char>(s[i + static_cast<size_t>(k)]);
      if ((b & 0xC0) != 0x80)
        throw ParseError("invalid utf-8 continuation at offset " +
                         std::to_string(i + static_cast<size_t>(k)));
      cp = (cp << 6) | (b & 0x3F);
    }
    out.push_back(cp);
    i += static_cast<size_t>(extra) + 1;
  }
  return out;
}

std::string utf8_encode(const std::vector<uint32_t>& cps) {
  std::string out;
  for (uint32_t cp : cps) {
    if (cp < 0x80) {
      out += static_cast<char>(cp);
    } else if (cp < 0x800) {
      out += static_cast<char>(0xC0 | (cp >> 6));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
      out += static_cast<char>(0xE0 | (cp >> 12));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
      out += static_cast<char>(0xF0 | (cp >> 18));
      out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
      out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
      out += static_cast<char>(0x80 | (cp & 0x3F));
    }
  }
  return out;
}

namespace {

uint32_t to_lower_cp(uint32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  // Latin-1 supplement capitals, skipping the multiplication sign.
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
  // Latin Extended-A uses interleaved case pairs.
  if ((cp >= 0x100 && cp <= 0x136 && cp % 2 == 0) ||
      (cp >= 0x139 && cp <= 0x147 && cp % 2 == 1) ||
      (cp >= 0x14A && cp <= 0x176 && cp % 2 == 0) ||
      (cp >= 0x179 && cp <= 0x17D && cp % 2 == 1))
    return cp + 1;
  if (cp == 0x178) return 0xFF;  // capital Y with diaeresis
  return cp;
}

bool is_space_cp(uint32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' ||
         cp == '\v' || cp == 0xA0 || (cp >= 0x2000 && cp <= 0x200A) ||
         cp == 0x2028 || cp == 0x2029 || cp == 0x202F || cp == 0x205F ||
         cp == 0x3000;
}

// Dropped entirely (zero-width and soft hyphen format characters).
bool is_ignorable_cp(uint32_t cp) {
  return cp == 0xAD || (cp >= 0x200B && cp <= 0x200D) || cp == 0xFEFF;
}

bool is_punct_cp(uint32_t cp) {
  if (cp == '\'') return false;  // the one survivor
  if ((cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
      (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E))
    return true;
  switch (cp) {  // Latin-1 punctuation
    case 0xA1:
    case 0xA7:
    case 0xAB:
    case 0xB6:
    case 0xB7:
    case 0xBB:
    case 0xBF:
      return true;
    default:
      break;
  }
  // General punctuation (dashes, quotes, ellipsis, daggers, primes, ...).
  if ((cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E))
    return true;
  // Common CJK and fullwidth marks.
  if ((cp >= 0x3001 && cp <= 0x3003) || (cp >= 0x3008 && cp <= 0x3011) ||
      (cp >= 0x3014 && cp <= 0x301F))
    return true;
  if (cp == 0xFF01 || cp == 0xFF0C || cp == 0xFF0E || cp == 0xFF1A ||
      cp == 0xFF1B || cp == 0xFF1F)
    return true;
  return false;
}

}  // namespace

std::string normalize(const std::string& text) {
  std::vector<uint32_t> cps = utf8_decode(text);
  std::vector<uint32_t> out;
  out.reserve(cps.size());
  bool pending_space = false;
  for (uint32_t cp : cps) {
    if (cp == 0x2019) cp = '\'';  // curly apostrophe
    if (is_ignorable_cp(cp)) continue;
    if (is_space_cp(cp)) {
      pending_space = true;
      continue;
    }
    cp = to_lower_cp(cp);
    if (is_punct_cp(cp)) continue;
    if (pending_space && !out.empty()) out.push_back(' ');
    pending_space = false;
    out.push_back(cp);
  }
  return utf8_encode(out);
}

// ---- BPE --------------------------------------------------------------------

namespace {

std::vector<std::string> word_to_symbols(const std::string& word) {
  std::vector<std::string> syms;
  for (uint32_t cp : utf8_decode(word)) syms.push_back(utf8_encode({cp}));
  syms.push_back(BpeModel::kEndOfWord);
  return syms;
}

void merge_in_place(std::vector<std::string>* syms, const std::string& a,
                    const std::string& b) {
  size_t w = 0;
  for (size_t r = 0; r < syms->size();) {
    if (r + 1 < syms->size() && (*syms)[r] == a && (*syms)[r + 1] == b) {
      (*syms)[w++] = a + b;
      r += 2;
    } else {
      if (w != r) (*syms)[w] = std::move((*syms)[r]);
      ++w;
      ++r;
    }
  }
  syms->resize(w);
}

std::string strip_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() >= suffix.size() &&
      s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0)
    return s.substr(0, s.size() - suffix.size());
  return s;
}

}  // namespace

BpeModel bpe_learn(const std::vector<std::string>& corpus, int n_merges) {
  if (n_merges < 0) throw ParamError("bpe_learn: n_merges must be >= 0");
  std::map<std::string, std::int64_t> word_freq;
  for (const std::string& line : corpus)
    for (const std::string& w : split_tokens(line)) word_freq[w]++;
  if (word_freq.empty()) throw ParamError("bpe_learn: empty corpus");

  BpeModel model;
  std::vector<std::pair<std::vector<std::string>, std::int64_t>> words;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq) {
    words.emplace_back(word_to_symbols(w), f);
    for (uint32_t cp : utf8_decode(w)) model.alphabet_[utf8_encode({cp})] = true;
  }

  for (int iter = 0; iter < n_merges; ++iter) {
    std::map<std::pair<std::string, std::string>, std::int64_t> pair_count;
    for (const auto& [syms, freq] : words)
      for (size_t i = 0; i + 1 < syms.size(); ++i)
        pair_count[{syms[i], syms[i + 1]}] += freq;
    // Highest count; ties to the lexicographically smallest pair. std::map
    // iterates in sorted pair order, so the first strict maximum wins both.
    std::pair<std::string, std::string> best;
    std::int64_t best_count = 0;
    for (const auto& [p, c] : pair_count)
      if (c > best_count) {
        best = p;
        best_count = c;
      }
    if (best_count < 2) break;  // no pair repeats
    model.merges_.push_back(best);
    for (auto& [syms, freq] : words) merge_in_place(&syms, best.first, best.second);
  }

  for (const auto& [a, b] : model.merges_) model.merged_[a + '\x1f' + b] = a + b;
  model.build_vocab();
  return model;
}

void BpeModel::build_vocab() {
  std::set<std::string> surface;
  for (const auto& [c, unused] : alphabet_) {
    surface.insert(c);
    surface.insert(c + kContinuation);
  }
  for (const auto& [a, b] : merges_) {
    const std::string m = a + b;
    surface.insert(strip_suffix(m, kEndOfWord));
    if (m.find(kEndOfWord) == std::string::npos)
      surface.insert(m + kContinuation);
  }
  id_to_token_ = {kPadToken, kBosToken, kEosToken, kUnkToken};
  for (const std::string& s : surface) id_to_token_.push_back(s);
  vocab_.clear();
  for (size_t i = 0; i < id_to_token_.size(); ++i)
    vocab_[id_to_token_[i]] = static_cast<int>(i);
}

std::vector<std::string> BpeModel::apply_word(const std::string& word) const {
  if (word.empty()) return {};
  std::vector<std::string> syms;
  for (uint32_t cp : utf8_decode(word)) {
    std::string c = utf8_encode({cp});
    syms.push_back(alphabet_.count(c) ? c : kUnkToken);
  }
  syms.push_back(kEndOfWord);
  for (const auto& [a, b] : merges_) merge_in_place(&syms, a, b);
  // Surface form: drop the end-of-word, mark non-final pieces.
  if (syms.back() == kEndOfWord)
    syms.pop_back();
  else
    syms.back() = strip_suffix(syms.back(), kEndOfWord);
  for (size_t i = 0; i + 1 < syms.size(); ++i)
    if (syms[i] != kUnkToken) syms[i] += kContinuation;
  return syms;
}

std::vector<std::string> BpeModel::apply_line(const std::string& line) const {
  std::vector<std::string> out;
  for (const std::string& w : split_tokens(line))
    for (std::string& piece : apply_word(w)) out.push_back(std::move(piece));
  return out;
}

int BpeModel::token_id(const std::string& token) const {
  auto it = vocab_.find(token);
  return it == vocab_.end() ? kUnkId : it->second;
}

std::vector<int> BpeModel::encode_line(const std::string& line) const {
  std::vector<int> ids;
  for (const std::string& t : apply_line(line)) ids.push_back(token_id(t));
  return ids;
}

const std::string& BpeModel::token(int id) const {
  if (id < 0 || id >= vocab_size())
    throw IndexError("bpe: token id " + std::to_string(id) + " out of " +
                     std::to_string(vocab_size()));
  return id_to_token_[static_cast<size_t>(id)];
}

std::string bpe_decode(const std::vector<std::string>& subwords) {
  std::string out;
  bool continuing = false;
  const std::string marker = BpeModel::kContinuation;
  for (const std::string& tok : subwords) {
    bool cont = tok.size() > marker.size() &&
                tok.compare(tok.size() - marker.size(), marker.size(),
                            marker) == 0;
    if (!continuing && !out.empty()) out += ' ';
    out += cont ? tok.substr(0, tok.size() - marker.size()) : tok;
    continuing = cont;
  }
  return out;
}

void BpeModel::save(const std::string& merges_path,
                    const std::string& vocab_path) const {
  std::ostringstream ms;
  ms << "phonest-bpe v1\n";
  for (const auto& [a, b] : merges_) ms << a << ' ' << b << '\n';
  write_file_atomic(merges_path, ms.str());
  std::ostringstream vs;
  for (size_t i = 0; i < id_to_token_.size(); ++i)
    vs << id_to_token_[i] << '\t' << i << '\n';
  write_file_atomic(vocab_path, vs.str());
}

BpeModel BpeModel::load(const std::string& merges_path,
                        const std::string& vocab_path) {
  BpeModel model;
  std::istringstream ms(read_text_file(merges_path));
  std::string line;
  if (!std::getline(ms, line) || line != "phonest-bpe v1")
    throw ParseError("bpe merges file " + merges_path +
                     ": missing or wrong version header");
  int lineno = 1;
  while (std::getline(ms, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size())
      throw ParseError("bpe merges file " + merges_path + " line " +
                       std::to_string(lineno) + ": expected 'left right'");
    model.merges_.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  for (const auto& [a, b] : model.merges_)
    model.merged_[a + '\x1f' + b] = a + b;

  std::istringstream vs(read_text_file(vocab_path));
  lineno = 0;
  std::vector<std::pair<int, std::string>> entries;
  while (std::getline(vs, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError("bpe vocab file " + vocab_path + " line " +
                       std::to_string(lineno) + ": expected 'subword<TAB>id'");
    entries.emplace_back(std::stoi(line.substr(tab + 1)), line.substr(0, tab));
  }
  std::sort(entries.begin(), entries.end());
  model.id_to_token_.clear();
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].first != static_cast<int>(i))
      throw ConsistencyError("bpe vocab file " + vocab_path +
                             ": ids are not dense from 0");
    model.id_to_token_.push_back(entries[i].second);
    model.vocab_[entries[i].second] = entries[i].first;
  }
  if (model.vocab_size() < 4 || model.token(kPadId) != kPadToken ||
      model.token(kUnkId) != kUnkToken)
    throw ConsistencyError("bpe vocab file " + vocab_path +
                           ": reserved ids are damaged");
  const std::string marker = kContinuation;
  for (const std::string& tok : model.id_to_token_) {
    std::string bare = strip_suffix(tok, marker);
    if (utf8_decode(bare).size() == 1) model.alphabet_[bare] = true;
  }
  return model;
}

}  // namespace phonest
