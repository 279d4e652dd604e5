#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nsc/config.hpp"
#include "nsc/error.hpp"
#include "nsc/model.hpp"
#include "nsc/vocab.hpp"

namespace nsc {

inline constexpr char kCheckpointMagic[4] = {'N', 'S', 'C', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;
inline constexpr const char* kGruConvention = "h_new=(1-z)*h_prev+z*cand";

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class ByteReader {
  public:
    ByteReader(const std::string& data, const std::string& path) : data_(data), path_(path) {}

    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(data_[pos_ + size_t(i)])) << (8 * i);
        pos_ += 4;
        return v;
    }

    uint64_t u64(const char* what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(data_[pos_ + size_t(i)])) << (8 * i);
        pos_ += 8;
        return v;
    }

    float f32(const char* what) {
        uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    std::string bytes(size_t n, const char* what) {
        need(n, what);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool exhausted() const { return pos_ == data_.size(); }

  private:
    void need(size_t n, const char* what) {
        if (data_.size() - pos_ < n) {
            throw LoadError("checkpoint '" + path_ + "' truncated while reading " + what);
        }
    }

    const std::string& data_;
    std::string path_;
    size_t pos_ = 0;
};

// The checkpoint header is machine-written key=value text; unlike user config
// files it gets no comment or whitespace handling, so tokens with '#' or '='
// survive.
inline std::map<std::string, std::string> parse_header_block(const std::string& text,
                                                             const std::string& path) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw LoadError("checkpoint '" + path + "' has a malformed header line: '" + line + "'");
        }
        out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

inline std::vector<std::string> split_tokens(const std::string& joined) {
    std::vector<std::string> out;
    std::istringstream in(joined);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

}  // namespace detail

template <typename Real>
struct Checkpoint {
    ModelParams<Real> params;
    Vocabulary src_vocab;
    Vocabulary tgt_vocab;
};

// magic "NSC1" | version u32 | header length u64 + key=value block |
// per parameter: name length u32, name, rank u32, dims u64 each, f32 LE data.
template <typename Real>
void save_checkpoint(ModelParams<Real>& params, const Vocabulary& src_vocab, const Vocabulary& tgt_vocab,
                     const std::string& path) {
    if (tgt_vocab.size() != params.tgt_vocab_size) {
        throw ContractError("target vocabulary size " + std::to_string(tgt_vocab.size()) +
                            " does not match model (" + std::to_string(params.tgt_vocab_size) + ")");
    }
    if (params.cfg.use_source && src_vocab.size() != params.src_vocab_size) {
        throw ContractError("source vocabulary size " + std::to_string(src_vocab.size()) +
                            " does not match model (" + std::to_string(params.src_vocab_size) + ")");
    }

    auto header_map = params.cfg.to_map();
    header_map["src_vocab_size"] = std::to_string(params.src_vocab_size);
    header_map["tgt_vocab_size"] = std::to_string(params.tgt_vocab_size);
    header_map["gru_convention"] = kGruConvention;
    header_map["tgt_vocab"] = detail::join_tokens(tgt_vocab.contents());
    if (params.cfg.use_source) header_map["src_vocab"] = detail::join_tokens(src_vocab.contents());
    std::string header = serialize_config(header_map);

    std::string out;
    out.append(kCheckpointMagic, 4);
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u64(out, header.size());
    out += header;
    for (const auto& entry : params.registry()) {
        const Tensor<Real>& t = *entry.tensor;
        detail::put_u32(out, uint32_t(entry.name.size()));
        out += entry.name;
        detail::put_u32(out, uint32_t(t.rank()));
        for (size_t d = 0; d < t.rank(); ++d) detail::put_u64(out, t.shape()[d]);
        for (size_t i = 0; i < t.numel(); ++i) detail::put_f32(out, float(t[i]));
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw DataError("cannot open '" + tmp + "' for writing");
        f.write(out.data(), std::streamsize(out.size()));
        if (!f) throw DataError("failed writing checkpoint to '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw DataError("failed to move checkpoint into place at '" + path + "'");
    }
}

template <typename Real>
Checkpoint<Real> load_checkpoint(const std::string& path) {
    std::string data;
    {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw LoadError("cannot open checkpoint '" + path + "'");
        std::ostringstream buf;
        buf << f.rdbuf();
        data = buf.str();
    }
    detail::ByteReader r(data, path);

    std::string magic = r.bytes(4, "magic");
    if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) {
        throw LoadError("'" + path + "' is not a checkpoint (bad magic)");
    }
    uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw LoadError("checkpoint '" + path + "' has unsupported version " + std::to_string(version));
    }
    uint64_t header_len = r.u64("header length");
    auto header = detail::parse_header_block(r.bytes(size_t(header_len), "header"), path);

    auto take = [&](const char* key) {
        auto it = header.find(key);
        if (it == header.end()) throw LoadError("checkpoint '" + path + "' header is missing '" + key + "'");
        std::string v = it->second;
        header.erase(it);
        return v;
    };
    auto take_size = [&](const char* key) {
        std::string v = take(key);
        try {
            return size_t(std::stoull(v));
        } catch (const std::exception&) {
            throw LoadError("checkpoint '" + path + "' has a bad value for '" + std::string(key) + "'");
        }
    };

    size_t src_vocab_size = take_size("src_vocab_size");
    size_t tgt_vocab_size = take_size("tgt_vocab_size");
    std::string convention = take("gru_convention");
    if (convention != kGruConvention) {
        throw LoadError("checkpoint '" + path + "' uses gru_convention '" + convention + "', expected '" +
                        kGruConvention + "'");
    }
    Vocabulary tgt_vocab = Vocabulary::from_tokens(detail::split_tokens(take("tgt_vocab")));
    Vocabulary src_vocab;
    if (header.count("src_vocab")) src_vocab = Vocabulary::from_tokens(detail::split_tokens(take("src_vocab")));

    ModelConfig cfg;
    try {
        for (const auto& [k, v] : header) cfg.apply(k, v);
        cfg.validate();
    } catch (const ConfigError& e) {
        throw LoadError("checkpoint '" + path + "' header: " + e.what());
    }

    if (tgt_vocab.size() != tgt_vocab_size) {
        throw LoadError("checkpoint '" + path + "' declares tgt_vocab_size " + std::to_string(tgt_vocab_size) +
                        " but stores " + std::to_string(tgt_vocab.size()) + " tokens");
    }
    if (cfg.use_source && src_vocab.size() != src_vocab_size) {
        throw LoadError("checkpoint '" + path + "' declares src_vocab_size " + std::to_string(src_vocab_size) +
                        " but stores " + std::to_string(src_vocab.size()) + " tokens");
    }

    Checkpoint<Real> ck{ModelParams<Real>(cfg, src_vocab_size, tgt_vocab_size), std::move(src_vocab),
                        std::move(tgt_vocab)};
    for (auto& entry : ck.params.registry()) {
        uint32_t name_len = r.u32(("name length of '" + entry.name + "'").c_str());
        std::string name = r.bytes(name_len, "parameter name");
        if (name != entry.name) {
            throw LoadError("checkpoint '" + path + "' has parameter '" + name + "' where '" + entry.name +
                            "' was expected");
        }
        Tensor<Real>& t = *entry.tensor;
        uint32_t rank = r.u32(("rank of '" + name + "'").c_str());
        if (rank != t.rank()) {
            throw LoadError("checkpoint '" + path + "': '" + name + "' has rank " + std::to_string(rank) +
                            ", expected " + std::to_string(t.rank()));
        }
        for (size_t d = 0; d < t.rank(); ++d) {
            uint64_t dim = r.u64(("dims of '" + name + "'").c_str());
            if (dim != t.shape()[d]) {
                throw LoadError("checkpoint '" + path + "': '" + name + "' dimension " + std::to_string(d) +
                                " is " + std::to_string(dim) + ", expected " +
                                std::to_string(t.shape()[d]));
            }
        }
        for (size_t i = 0; i < t.numel(); ++i) {
            t[i] = Real(r.f32(("data of '" + name + "'").c_str()));
        }
    }
    if (!r.exhausted()) throw LoadError("checkpoint '" + path + "' has trailing bytes after the last parameter");
    return ck;
}

}  // namespace nsc
