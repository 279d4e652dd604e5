#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nsc/error.hpp"
#include "nsc/token.hpp"

namespace nsc {

inline Sentence split_words(const std::string& line) {
    Sentence out;
    std::istringstream in(line);
    std::string w;
    while (in >> w) out.push_back(std::move(w));
    return out;
}

inline std::string join_words(const Sentence& words) {
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

// One sentence per line, whitespace-separated tokens.
inline std::vector<Sentence> read_sentences(const std::string& path) {
    std::vector<Sentence> out;
    for (const std::string& line : read_lines(path)) out.push_back(split_words(line));
    return out;
}

// Atomic: written to a sibling tmp file, then renamed into place.
inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp);
        for (const std::string& line : lines) out << line << '\n';
        out.flush();
        if (!out) throw DataError("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot move " + tmp + " into place");
    }
}

// Atomic whole-file write, same tmp+rename dance as write_lines.
inline void write_text(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp);
        out << text;
        out.flush();
        if (!out) throw DataError("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("cannot move " + tmp + " into place");
    }
}

inline void write_sentences(const std::string& path, const std::vector<Sentence>& sentences) {
    std::vector<std::string> lines;
    lines.reserve(sentences.size());
    for (const Sentence& s : sentences) lines.push_back(join_words(s));
    write_lines(path, lines);
}

}  // namespace nsc
