#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nsc/error.hpp"

namespace nsc {

// Everything that shapes the model or its training, one flat struct.
// `parse` and `serialize` round-trip through the key=value text format used
// by config files and checkpoint headers.
struct ModelConfig {
    size_t num_systems = 3;          // K system inputs
    bool use_source = true;          // attend the source as an extra input
    bool share_word_attention = false;   // one (W_a,U_a,v_a) across system inputs
    bool share_system_encoders = false;  // one encoder pair across system inputs
    size_t hidden = 32;              // n
    size_t embedding = 16;
    size_t src_vocab_limit = 200;
    size_t tgt_vocab_limit = 200;
    size_t batch_size = 8;
    size_t max_epochs = 30;
    size_t beam = 4;
    bool length_norm = true;
    size_t patience = 10;            // dev evaluations without improvement
    uint64_t seed = 1;

    void validate() const {
        if (num_systems < 1) throw ConfigError("num_systems must be at least 1");
        if (hidden < 1 || embedding < 1) throw ConfigError("hidden and embedding sizes must be at least 1");
        if (src_vocab_limit < 1 || tgt_vocab_limit < 1) throw ConfigError("vocabulary limits must be at least 1");
        if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
        if (beam < 1) throw ConfigError("beam must be at least 1");
    }

    // Number of attended inputs per example.
    size_t num_inputs() const { return num_systems + (use_source ? 1 : 0); }

    static ModelConfig desk_preset() { return ModelConfig{}; }

    static ModelConfig paper_preset() {
        ModelConfig c;
        c.hidden = 1000;
        c.embedding = 500;
        c.src_vocab_limit = 30000;
        c.tgt_vocab_limit = 30000;
        c.beam = 10;
        c.batch_size = 80;
        return c;
    }

    static ModelConfig preset(const std::string& name) {
        if (name == "desk") return desk_preset();
        if (name == "paper") return paper_preset();
        throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
    }

    std::map<std::string, std::string> to_map() const {
        return {
            {"num_systems", std::to_string(num_systems)},
            {"use_source", use_source ? "true" : "false"},
            {"share_word_attention", share_word_attention ? "true" : "false"},
            {"share_system_encoders", share_system_encoders ? "true" : "false"},
            {"hidden", std::to_string(hidden)},
            {"embedding", std::to_string(embedding)},
            {"src_vocab_limit", std::to_string(src_vocab_limit)},
            {"tgt_vocab_limit", std::to_string(tgt_vocab_limit)},
            {"batch_size", std::to_string(batch_size)},
            {"max_epochs", std::to_string(max_epochs)},
            {"beam", std::to_string(beam)},
            {"length_norm", length_norm ? "true" : "false"},
            {"patience", std::to_string(patience)},
            {"seed", std::to_string(seed)},
        };
    }

    void apply(const std::string& key, const std::string& value) {
        auto as_size = [&]() -> size_t {
            try {
                size_t pos = 0;
                auto v = std::stoull(value, &pos);
                if (pos != value.size()) throw std::invalid_argument(value);
                return v;
            } catch (const std::exception&) {
                throw ConfigError("bad numeric value '" + value + "' for key '" + key + "'");
            }
        };
        auto as_bool = [&]() -> bool {
            if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
            if (value == "false" || value == "0" || value == "off" || value == "no") return false;
            throw ConfigError("bad boolean value '" + value + "' for key '" + key + "'");
        };
        if (key == "num_systems") num_systems = as_size();
        else if (key == "use_source") use_source = as_bool();
        else if (key == "share_word_attention") share_word_attention = as_bool();
        else if (key == "share_system_encoders") share_system_encoders = as_bool();
        else if (key == "hidden") hidden = as_size();
        else if (key == "embedding") embedding = as_size();
        else if (key == "src_vocab_limit") src_vocab_limit = as_size();
        else if (key == "tgt_vocab_limit") tgt_vocab_limit = as_size();
        else if (key == "batch_size") batch_size = as_size();
        else if (key == "max_epochs") max_epochs = as_size();
        else if (key == "beam") beam = as_size();
        else if (key == "length_norm") length_norm = as_bool();
        else if (key == "patience") patience = as_size();
        else if (key == "seed") seed = as_size();
        else throw ConfigError("unknown configuration key '" + key + "'");
    }
};

// One key=value per line; '#' starts a comment; blank lines ignored.
inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + " is not key=value: '" + line + "'");
        }
        auto trim = [](std::string s) {
            auto a = s.find_first_not_of(" \t");
            auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key on line " + std::to_string(lineno));
        out[key] = value;
    }
    return out;
}

inline ModelConfig parse_model_config(const std::string& text, ModelConfig base = ModelConfig{}) {
    for (const auto& [k, v] : parse_key_values(text)) base.apply(k, v);
    base.validate();
    return base;
}

inline std::string serialize_config(const std::map<std::string, std::string>& kv) {
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

}  // namespace nsc
