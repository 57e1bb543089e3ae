#include "geb/model/config.hpp"

#include "geb/errors.hpp"

namespace geb::model {

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(vocab_size, "vocab_size");
    positive(hidden_size, "hidden_size");
    positive(ffn_size, "ffn_size");
    positive(n_heads, "n_heads");
    positive(n_layers, "n_layers");
    positive(kv_groups, "kv_groups");
    positive(max_seq_len, "max_seq_len");
    if (hidden_size % n_heads != 0) {
        throw ConfigError("hidden_size " + std::to_string(hidden_size) + " is not divisible by n_heads " +
                          std::to_string(n_heads));
    }
    if (n_heads % kv_groups != 0) {
        throw ConfigError("n_heads " + std::to_string(n_heads) + " is not divisible by kv_groups " +
                          std::to_string(kv_groups));
    }
    if (head_dim() % 2 != 0) {
        throw ConfigError("head_dim " + std::to_string(head_dim()) + " must be even for rotary embeddings");
    }
    if (!(rope_base > 0.0)) throw ConfigError("rope_base must be positive");
    if (!(norm_eps > 0.0)) throw ConfigError("norm_eps must be positive");
}

util::KvDoc ModelConfig::to_kv() const {
    util::KvDoc doc;
    doc.set("vocab_size", static_cast<std::uint64_t>(vocab_size));
    doc.set("hidden_size", static_cast<std::uint64_t>(hidden_size));
    doc.set("ffn_size", static_cast<std::uint64_t>(ffn_size));
    doc.set("n_heads", static_cast<std::uint64_t>(n_heads));
    doc.set("n_layers", static_cast<std::uint64_t>(n_layers));
    doc.set("kv_groups", static_cast<std::uint64_t>(kv_groups));
    doc.set("max_seq_len", static_cast<std::uint64_t>(max_seq_len));
    doc.set("rope_base", rope_base);
    doc.set("norm_eps", norm_eps);
    doc.set("norm_placement", to_string(norm_placement));
    return doc;
}

ModelConfig ModelConfig::from_kv(const util::KvDoc& doc) {
    ModelConfig c;
    c.vocab_size = doc.get_uint("vocab_size", c.vocab_size);
    c.hidden_size = doc.get_uint("hidden_size", c.hidden_size);
    c.ffn_size = doc.contains("ffn_size") ? doc.get_uint("ffn_size", 0) : swiglu_ffn_size(c.hidden_size);
    c.n_heads = doc.get_uint("n_heads", c.n_heads);
    c.n_layers = doc.get_uint("n_layers", c.n_layers);
    c.kv_groups = doc.get_uint("kv_groups", c.kv_groups);
    c.max_seq_len = doc.get_uint("max_seq_len", c.max_seq_len);
    c.rope_base = doc.get_double("rope_base", c.rope_base);
    c.norm_eps = doc.get_double("norm_eps", c.norm_eps);
    c.norm_placement = norm_placement_from_string(doc.get_string("norm_placement", "post"));
    c.validate();
    return c;
}

std::size_t swiglu_ffn_size(std::size_t hidden_size) {
    const std::size_t raw = (8 * hidden_size + 2) / 3;  // ceil(8h/3)
    return (raw + 255) / 256 * 256;
}

std::uint64_t param_count(const ModelConfig& cfg) {
    cfg.validate();
    const std::uint64_t h = cfg.hidden_size;
    const std::uint64_t kv = cfg.kv_width();
    const std::uint64_t per_layer = h * h       // W_q
                                    + 2 * h * kv  // W_k, W_v
                                    + h * h       // W_o
                                    + 3 * h * cfg.ffn_size  // W_gate, W_up, W_down
                                    + 2 * h;      // norm gains
    return 2 * static_cast<std::uint64_t>(cfg.vocab_size) * h + cfg.n_layers * per_layer + h;
}

std::string to_string(NormPlacement p) { return p == NormPlacement::Post ? "post" : "pre"; }

NormPlacement norm_placement_from_string(const std::string& s) {
    if (s == "post") return NormPlacement::Post;
    if (s == "pre") return NormPlacement::Pre;
    throw ConfigError("norm_placement must be 'post' or 'pre', got '" + s + "'");
}

}  // namespace geb::model
