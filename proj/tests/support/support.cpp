#include "support.hpp"

#include <array>
#include <fstream>
#include <random>
#include <sstream>

#include "geb/errors.hpp"
#include "geb/model/transformer.hpp"

namespace geb::testutil {

namespace fs = std::filesystem;

fs::path fixture_path(const std::string& relative) { return fs::path(GEB_FIXTURE_DIR) / relative; }

model::ModelConfig toy_config() {
    model::ModelConfig c;
    c.vocab_size = 64;
    c.hidden_size = 16;
    c.ffn_size = 48;
    c.n_heads = 4;
    c.kv_groups = 2;
    c.n_layers = 2;
    c.max_seq_len = 64;
    return c;
}

train::TrainConfig drill_config(std::size_t steps) {
    train::TrainConfig c;
    c.model.vocab_size = 260;
    c.model.hidden_size = 32;
    c.model.ffn_size = 96;
    c.model.n_heads = 4;
    c.model.kv_groups = 2;
    c.model.n_layers = 2;
    c.model.max_seq_len = 64;
    c.opt = train::OptimizerConfig::for_steps(steps);
    c.opt.lr_peak = 3e-3;
    c.opt.lr_min = 3e-4;
    c.opt.warmup_steps = 10;
    c.batch_size = 4;
    c.seq_len = 32;
    c.steps = steps;
    c.seed = 7;
    return c;
}

std::string synthetic_text(std::size_t bytes, std::uint64_t seed) {
    static constexpr std::array<const char*, 8> subjects = {"the cat",   "a dog",        "the model",   "my friend",
                                                            "the river", "a small bird", "the teacher", "our team"};
    static constexpr std::array<const char*, 8> verbs = {"sees",   "likes",   "follows", "builds",
                                                         "finds",  "carries", "watches", "remembers"};
    static constexpr std::array<const char*, 8> objects = {"the ball",      "a red house", "the old tree",
                                                           "some water",    "the long road", "a quiet song",
                                                           "the garden",    "a new idea"};
    std::mt19937_64 rng(seed);
    std::string out;
    while (out.size() < bytes) {
        std::string s = std::string(subjects[rng() % subjects.size()]) + " " + verbs[rng() % verbs.size()] + " " +
                        objects[rng() % objects.size()] + ".";
        s[0] = static_cast<char>(s[0] - 'a' + 'A');
        if (!out.empty()) out += ' ';
        out += s;
    }
    return out;
}

std::vector<nd::TokenId> byte_ids(const std::string& text) {
    std::vector<nd::TokenId> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(static_cast<nd::TokenId>(c) + 4);
    return ids;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

TempDir::TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    for (;;) {
        path_ = fs::temp_directory_path() /
                ("geb_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        if (fs::create_directories(path_)) break;
    }
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

model::ModelParams<double> gradcheck_params(const model::ModelConfig& cfg, std::uint64_t seed) {
    auto params = model::init_params<double>(cfg, seed);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_real_distribution<double> gain(0.5, 1.5);
    params.for_each([&](const std::string&, nd::TensorD& t) {
        if (t.rank() == 2) {
            for (auto& v : t.data()) v *= 15.0;
        } else {
            for (auto& v : t.data()) v = gain(rng);
        }
    });
    return params;
}

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
    }
    const double scale = std::sqrt(std::max(na, nn));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

nd::GradMap<double> numeric_gradients(model::ModelParams<double> params, const ParamLoss& f, double h) {
    nd::GradMap<double> out;
    for (auto& [name, t] : params.named()) {
        nd::TensorD g(t->shape());
        for (std::size_t i = 0; i < t->numel(); ++i) {
            const double saved = (*t)[i];
            (*t)[i] = saved + h;
            const double up = f(params);
            (*t)[i] = saved - h;
            const double down = f(params);
            (*t)[i] = saved;
            g[i] = (up - down) / (2.0 * h);
        }
        out.emplace(name, std::move(g));
    }
    return out;
}

nd::TensorD reference_attention(const nd::TensorD& x, const model::LayerParams<double>& layer,
                                const model::ModelConfig& cfg, std::size_t start_pos) {
    const std::size_t seq = x.rows();
    const std::size_t hd = cfg.head_dim();
    const std::size_t hidden = cfg.hidden_size;
    const std::size_t kvw = cfg.kv_width();
    const auto project = [&](const nd::TensorD& w, std::size_t width) {
        std::vector<double> out(seq * width, 0.0);
        for (std::size_t s = 0; s < seq; ++s) {
            for (std::size_t o = 0; o < width; ++o) {
                double acc = 0.0;
                for (std::size_t i = 0; i < hidden; ++i) acc += x.at(s, i) * w.at(i, o);
                out[s * width + o] = acc;
            }
        }
        return out;
    };
    std::vector<double> q = project(layer.wq, hidden);
    std::vector<double> k = project(layer.wk, kvw);
    const std::vector<double> v = project(layer.wv, kvw);
    // Rotate each head's pairs in place by position * base^(-2i/hd).
    const auto rotate = [&](std::vector<double>& m, std::size_t width) {
        for (std::size_t s = 0; s < seq; ++s) {
            const double pos = static_cast<double>(start_pos + s);
            for (std::size_t head = 0; head < width / hd; ++head) {
                for (std::size_t i = 0; i < hd / 2; ++i) {
                    const double angle = pos / std::pow(cfg.rope_base, 2.0 * double(i) / double(hd));
                    double& a = m[s * width + head * hd + 2 * i];
                    double& b = m[s * width + head * hd + 2 * i + 1];
                    const double ra = a * std::cos(angle) - b * std::sin(angle);
                    const double rb = a * std::sin(angle) + b * std::cos(angle);
                    a = ra;
                    b = rb;
                }
            }
        }
    };
    rotate(q, hidden);
    rotate(k, kvw);

    std::vector<double> heads(seq * hidden, 0.0);
    const std::size_t per_group = cfg.n_heads / cfg.kv_groups;
    for (std::size_t h = 0; h < cfg.n_heads; ++h) {
        const std::size_t g = h / per_group;
        for (std::size_t i = 0; i < seq; ++i) {
            std::vector<double> score(i + 1);
            double mx = -INFINITY;
            for (std::size_t j = 0; j <= i; ++j) {
                double dot = 0.0;
                for (std::size_t d = 0; d < hd; ++d) dot += q[i * hidden + h * hd + d] * k[j * kvw + g * hd + d];
                score[j] = dot / std::sqrt(double(hd));
                mx = std::max(mx, score[j]);
            }
            double z = 0.0;
            for (auto& s : score) z += (s = std::exp(s - mx));
            for (std::size_t j = 0; j <= i; ++j) {
                for (std::size_t d = 0; d < hd; ++d) {
                    heads[i * hidden + h * hd + d] += score[j] / z * v[j * kvw + g * hd + d];
                }
            }
        }
    }
    nd::TensorD out({seq, hidden});
    for (std::size_t s = 0; s < seq; ++s) {
        for (std::size_t o = 0; o < hidden; ++o) {
            double acc = 0.0;
            for (std::size_t i = 0; i < hidden; ++i) acc += heads[s * hidden + i] * layer.wo.at(i, o);
            out.at(s, o) = acc;
        }
    }
    return out;
}

}  // namespace geb::testutil

namespace geb::testutil {

std::vector<corpus::Shard> planted_shards() {
    return {corpus::read_shard(fixture_path("pipeline/shard_web.jsonl")),
            corpus::read_shard(fixture_path("pipeline/shard_forum.jsonl"))};
}

corpus::NgramModel planted_reference(const corpus::PipelineConfig& cfg) {
    return corpus::train_ngram({read_file(fixture_path("pipeline/reference.txt"))}, cfg.ngram_order, cfg.ngram_lambda,
                               cfg.ngram_k, cfg.terminal_punct);
}

}  // namespace geb::testutil
