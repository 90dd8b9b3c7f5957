#include "t2s/policy.hpp"

#include <cctype>
#include <cmath>

#include "t2s/errors.hpp"
#include "t2s/ops.hpp"
#include "t2s/rng.hpp"

namespace t2s {

namespace {

constexpr std::uint64_t kCodebookSize = 4096;
constexpr double kPosScale = 0.25;

std::vector<std::string> words_of(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

}  // namespace

Policy::Policy(PolicyConfig cfg) : cfg_(cfg), pools_(cfg.seed) {
    if (cfg_.blocks < 1 || cfg_.width < 1 || cfg_.j < 1 || cfg_.window < 1 ||
        cfg_.obs_dim < 1 || cfg_.d_act < 1 || cfg_.heads < 1) {
        throw ConfigError("policy: all size parameters must be positive");
    }
    if (cfg_.mu < 0.0 || cfg_.mu > 1.0) throw ConfigError("policy: mu must be in [0,1]");
    if (cfg_.capacity < cfg_.j) {
        throw ConfigError("policy: pool capacity must be at least j");
    }
    if (cfg_.width % cfg_.heads != 0) {
        throw ConfigError("policy: head count must divide the model width");
    }

    const double key_std = 1.0 / std::sqrt(static_cast<double>(cfg_.width));
    for (std::int64_t b = 0; b < cfg_.blocks; ++b) {
        const std::string prefix = "block" + std::to_string(b) + ".";
        TpstBlock block;
        block.token_mixing = cfg_.token_mixing;
        block.heads = cfg_.heads;
        if (cfg_.token_mixing) {
            for (const char* sub : {"q", "k", "v", "o", "ffn"}) {
                block.sublayers.push_back(pools_.layer_count());
                pools_.add_layer(prefix + sub, cfg_.width, cfg_.width, cfg_.capacity,
                                 key_std, key_std);
            }
        } else {
            block.sublayers.push_back(pools_.layer_count());
            pools_.add_layer(prefix + "ffn", cfg_.width, cfg_.width, cfg_.capacity,
                             key_std, key_std);
        }
        blocks_.push_back(std::move(block));
    }
    pools_.add_layer("head", cfg_.width, cfg_.d_act, cfg_.capacity, key_std, 0.02);

    Rng prng = make_rng(mix_seed(cfg_.seed, "obs-proj"));
    obs_proj_ = Tensor::randn({cfg_.width, cfg_.obs_dim}, prng, 1.0);

    const std::int64_t T = cfg_.window + 1;
    pos_.assign(static_cast<std::size_t>(T * cfg_.width), 0.0);
    for (std::int64_t t = 0; t < T; ++t) {
        for (std::int64_t i = 0; i < cfg_.width; ++i) {
            const double rate =
                std::pow(10000.0, -2.0 * static_cast<double>(i / 2) /
                                      static_cast<double>(cfg_.width));
            const double angle = static_cast<double>(t) * rate;
            pos_[static_cast<std::size_t>(t * cfg_.width + i)] =
                kPosScale * (i % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    }
}

PoolBudget Policy::budget() const {
    PoolBudget b;
    b.j = cfg_.j;
    b.mu = cfg_.mu;
    b.n = pools_.capacity();
    b.refill = cfg_.refill;
    return b;
}

std::vector<double> Policy::embed_instruction(const std::string& text) const {
    const std::vector<std::string> words = words_of(text);
    if (words.empty()) throw ContractError("embed_instruction: no words in instruction");
    std::vector<double> e(static_cast<std::size_t>(cfg_.width), 0.0);
    for (const std::string& w : words) {
        const std::uint64_t slot = hash_str(w) % kCodebookSize;
        Rng rng = make_rng(mix_seed(cfg_.seed, "codebook", slot));
        for (double& x : e) x += normal(rng);
    }
    double norm = 0.0;
    for (double x : e) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-300) throw ContractError("embed_instruction: degenerate embedding");
    for (double& x : e) x /= norm;
    return e;
}

std::vector<double> Policy::encode_observation(const std::vector<double>& obs) const {
    if (static_cast<std::int64_t>(obs.size()) != cfg_.obs_dim) {
        throw ShapeError("encode_observation: observation width mismatch");
    }
    std::vector<double> tok(static_cast<std::size_t>(cfg_.width), 0.0);
    const double* p = obs_proj_.data();
    for (std::int64_t r = 0; r < cfg_.width; ++r) {
        double acc = 0.0;
        for (std::int64_t c = 0; c < cfg_.obs_dim; ++c) {
            acc += p[r * cfg_.obs_dim + c] * obs[static_cast<std::size_t>(c)];
        }
        tok[static_cast<std::size_t>(r)] = acc;
    }
    return tok;
}

Tensor Policy::encode_window_batch(const std::vector<ObservationWindow>& windows,
                                   const std::vector<double>& e) const {
    if (windows.empty()) throw ContractError("encode_window_batch: empty batch");
    if (static_cast<std::int64_t>(e.size()) != cfg_.width) {
        throw ShapeError("encode_window_batch: embedding width mismatch");
    }
    const std::int64_t B = static_cast<std::int64_t>(windows.size());
    const std::int64_t W = cfg_.window, d = cfg_.width, T = W + 1;
    const double escale = std::sqrt(static_cast<double>(d));

    std::vector<double> data(static_cast<std::size_t>(B * T * d), 0.0);
    for (std::int64_t b = 0; b < B; ++b) {
        const ObservationWindow& win = windows[static_cast<std::size_t>(b)];
        if (win.empty() || static_cast<std::int64_t>(win.size()) > W) {
            throw ContractError("encode_window_batch: window length must be in [1, W]");
        }
        double* base = data.data() + b * T * d;
        for (std::int64_t i = 0; i < d; ++i) {
            base[i] = e[static_cast<std::size_t>(i)] * escale + pos_[static_cast<std::size_t>(i)];
        }
        // left-pad short histories by repeating the earliest frame
        const std::int64_t have = static_cast<std::int64_t>(win.size());
        for (std::int64_t w = 0; w < W; ++w) {
            const std::int64_t src = std::max<std::int64_t>(0, have - W + w);
            const std::vector<double> tok = encode_observation(win[static_cast<std::size_t>(src)]);
            double* slot = base + (w + 1) * d;
            const double* ps = pos_.data() + (w + 1) * d;
            for (std::int64_t i = 0; i < d; ++i) {
                slot[i] = tok[static_cast<std::size_t>(i)] + ps[i];
            }
        }
    }
    return Tensor::from_data(std::move(data), {B, T, d});
}

Tensor Policy::forward(const std::vector<ObservationWindow>& windows,
                       const std::vector<double>& e, int task_id, ForwardMode mode) {
    const TaskMask& mask = pools_.task_mask(task_id);
    Tensor x = encode_window_batch(windows, e);
    for (const TpstBlock& block : blocks_) {
        x = block.forward(pools_, mask, x, mode);
    }
    Tensor last = ops::take_token(x, cfg_.window);  // most recent frame's token
    return pattention_apply(pools_.layer(head_layer()), mask.layers[head_layer()], last,
                            mode);
}

std::array<double, 2> Policy::act(const ObservationWindow& window,
                                  const std::vector<double>& e, int task_id) {
    NoGradGuard ng;
    Tensor a = forward({window}, e, task_id, ForwardMode::Unified);
    if (a.dim(1) != 2) throw ContractError("act: action head width is not 2");
    return {a.at(0, 0), a.at(0, 1)};
}

std::vector<Tensor> Policy::trainable_parameters() {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < pools_.layer_count(); ++i) {
        out.push_back(pools_.layer(i).keys);
        out.push_back(pools_.layer(i).values);
    }
    return out;
}

ParameterCensus Policy::parameter_census() const {
    ParameterCensus c;
    c.pool_layers = static_cast<std::int64_t>(pools_.layer_count());
    for (std::size_t i = 0; i < pools_.layer_count(); ++i) {
        const LayerPool& lp = pools_.layer(i);
        c.trainable_tensors += 2;
        c.trainable_floats += lp.keys.numel() + lp.values.numel();
    }
    return c;
}

Tensor bc_loss(const Tensor& pred, const Tensor& target) { return ops::mse(pred, target); }

}  // namespace t2s
