#pragma once

// Byte-level tokenizer: every byte maps to one token, offset past the four
// specials. Tiny fixed vocabulary (260) and exactly invertible, which keeps
// the text side of the pipeline deterministic.

#include <cstdint>
#include <string>
#include <vector>

namespace medvlm {

namespace tok {

constexpr int PAD = 0;
constexpr int BOS = 1;
constexpr int EOS = 2;
constexpr int IMG = 3;  // placeholder marking where image tokens splice in
constexpr int BYTE_OFFSET = 4;
constexpr int VOCAB_SIZE = 260;

inline std::vector<int> encode(const std::string& text) {
    std::vector<int> ids;
    ids.reserve(text.size());
    for (const char c : text) ids.push_back(static_cast<unsigned char>(c) + BYTE_OFFSET);
    return ids;
}

// Inverse of encode on byte tokens; special ids carry no bytes and are skipped.
inline std::string decode(const std::vector<int>& ids) {
    std::string out;
    out.reserve(ids.size());
    for (const int id : ids)
        if (id >= BYTE_OFFSET && id < VOCAB_SIZE)
            out.push_back(static_cast<char>(id - BYTE_OFFSET));
    return out;
}

}  // namespace tok

}  // namespace medvlm
