#include "t2s/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <utility>

#include "t2s/errors.hpp"
#include "t2s/ops.hpp"
#include "t2s/rng.hpp"

namespace t2s {

RunMode run_mode_from_string(const std::string& s) {
    if (s == "t2s") return RunMode::T2s;
    if (s == "naive-independent") return RunMode::NaiveIndependent;
    if (s == "task-id") return RunMode::TaskId;
    if (s == "sequential") return RunMode::Sequential;
    throw ConfigError("unknown run mode: " + s +
                      " (expected t2s, naive-independent, task-id, or sequential)");
}

const char* run_mode_name(RunMode mode) {
    switch (mode) {
        case RunMode::T2s: return "t2s";
        case RunMode::NaiveIndependent: return "naive-independent";
        case RunMode::TaskId: return "task-id";
        case RunMode::Sequential: return "sequential";
    }
    throw ConfigError("unknown run mode enum value");
}

namespace {

LifelongRunConfig normalize_config(const LifelongRunConfig& raw) {
    LifelongRunConfig c = raw;
    c.suite.seed = c.seed;
    c.policy.seed = c.seed;
    if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (c.batch < 1) throw ConfigError("batch must be >= 1");
    if (c.demos_per_task < 1) throw ConfigError("demos_per_task must be >= 1");
    if (c.eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
    if (!(c.divergence_guard > 0.0)) throw ConfigError("divergence_guard must be positive");
    if (c.optim.lr <= 0.0) throw ConfigError("optimizer lr must be positive");
    const int K = c.suite.K;
    if (c.order.empty()) {
        c.order.resize(static_cast<std::size_t>(K));
        for (int i = 0; i < K; ++i) c.order[static_cast<std::size_t>(i)] = i;
    } else {
        if (static_cast<int>(c.order.size()) != K) {
            throw ConfigError("order must list all " + std::to_string(K) + " tasks");
        }
        std::vector<char> seen(static_cast<std::size_t>(K), 0);
        for (int v : c.order) {
            if (v < 0 || v >= K || seen[static_cast<std::size_t>(v)]) {
                throw ConfigError("order is not a permutation of 0.." + std::to_string(K - 1));
            }
            seen[static_cast<std::size_t>(v)] = 1;
        }
    }
    return c;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
}

}  // namespace

std::string canonical_config_text(const LifelongRunConfig& raw) {
    const LifelongRunConfig c = normalize_config(raw);
    std::vector<std::pair<std::string, std::string>> kv;
    kv.emplace_back("batch", std::to_string(c.batch));
    kv.emplace_back("demos_per_task", std::to_string(c.demos_per_task));
    kv.emplace_back("divergence_guard", fmt_double(c.divergence_guard));
    kv.emplace_back("epochs", std::to_string(c.epochs));
    kv.emplace_back("eval_episodes", std::to_string(c.eval_episodes));
    kv.emplace_back("mode", run_mode_name(c.mode));
    kv.emplace_back("nbt_convention", nbt_convention_token(c.nbt_convention));
    std::string ord;
    for (std::size_t i = 0; i < c.order.size(); ++i) {
        if (i) ord += ',';
        ord += std::to_string(c.order[i]);
    }
    kv.emplace_back("order", ord);
    kv.emplace_back("opt_beta1", fmt_double(c.optim.beta1));
    kv.emplace_back("opt_beta2", fmt_double(c.optim.beta2));
    kv.emplace_back("opt_eps", fmt_double(c.optim.eps));
    kv.emplace_back("opt_kind", opt_kind_name(c.optim.kind));
    kv.emplace_back("opt_lr", fmt_double(c.optim.lr));
    kv.emplace_back("opt_momentum", fmt_double(c.optim.momentum));
    kv.emplace_back("policy_blocks", std::to_string(c.policy.blocks));
    kv.emplace_back("policy_capacity", std::to_string(c.policy.capacity));
    kv.emplace_back("policy_d_act", std::to_string(c.policy.d_act));
    kv.emplace_back("policy_heads", std::to_string(c.policy.heads));
    kv.emplace_back("policy_j", std::to_string(c.policy.j));
    kv.emplace_back("policy_mu", fmt_double(c.policy.mu));
    kv.emplace_back("policy_obs_dim", std::to_string(c.policy.obs_dim));
    kv.emplace_back("policy_refill", c.policy.refill ? "1" : "0");
    kv.emplace_back("policy_token_mixing", c.policy.token_mixing ? "1" : "0");
    kv.emplace_back("policy_width", std::to_string(c.policy.width));
    kv.emplace_back("policy_window", std::to_string(c.policy.window));
    kv.emplace_back("seed", std::to_string(c.seed));
    kv.emplace_back("suite_a_max", fmt_double(c.suite.a_max));
    kv.emplace_back("suite_agent_hi", fmt_double(c.suite.agent_hi));
    kv.emplace_back("suite_agent_lo", fmt_double(c.suite.agent_lo));
    kv.emplace_back("suite_eps", fmt_double(c.suite.eps));
    kv.emplace_back("suite_goal_jitter", fmt_double(c.suite.goal_jitter));
    kv.emplace_back("suite_horizon", std::to_string(c.suite.horizon));
    kv.emplace_back("suite_object_hi", fmt_double(c.suite.object_hi));
    kv.emplace_back("suite_object_lo", fmt_double(c.suite.object_lo));
    kv.emplace_back("suite_r_contact", fmt_double(c.suite.r_contact));
    kv.emplace_back("suite_tasks", std::to_string(c.suite.K));
    std::sort(kv.begin(), kv.end());
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

std::uint64_t config_hash(const LifelongRunConfig& cfg) {
    return hash_str(canonical_config_text(cfg));
}

Actor make_policy_actor(Policy& policy, const std::vector<double>& e, int task_id) {
    const std::int64_t w = policy.config().window;
    return [&policy, e, task_id, w](const std::vector<std::vector<double>>& history) {
        const std::size_t take =
            std::min<std::size_t>(history.size(), static_cast<std::size_t>(w));
        ObservationWindow win(history.end() - static_cast<std::ptrdiff_t>(take), history.end());
        return policy.act(win, e, task_id);
    };
}

LifelongTrainer::LifelongTrainer(const LifelongRunConfig& cfg)
    : cfg_(normalize_config(cfg)),
      suite_(make_suite(cfg_.suite)),
      order_(cfg_.order),
      policy_(cfg_.policy),
      matrix_(cfg_.suite.K) {}

LifelongTrainer::LifelongTrainer(const LifelongRunConfig& cfg, const Checkpoint& ck)
    : LifelongTrainer(cfg) {
    if (ck.config_hash != config_hash(cfg_)) {
        throw LoadError("checkpoint was produced by a different config (hash mismatch); refusing to resume");
    }
    if (ck.total_tasks != total()) throw LoadError("checkpoint task count mismatch");
    if (ck.completed < 0 || ck.completed > total()) throw LoadError("checkpoint completed count out of range");
    if (ck.seed != cfg_.seed) throw LoadError("checkpoint seed mismatch");

    PoolSet& pools = policy_.pools();
    if (ck.layers.size() != pools.layer_count()) throw LoadError("checkpoint layer count mismatch");
    std::int64_t rows = -1;
    for (const LayerState& ls : ck.layers) {
        if (rows < 0) rows = ls.rows;
        if (ls.rows != rows) throw LoadError("checkpoint layer row counts disagree: " + ls.name);
    }
    std::vector<std::vector<std::uint8_t>> used;
    for (std::size_t i = 0; i < ck.layers.size(); ++i) {
        const LayerState& ls = ck.layers[i];
        const LayerPool& lp = pools.layer(i);
        if (ls.name != lp.name) throw LoadError("checkpoint layer name mismatch: " + ls.name);
        if (ls.d_in != lp.keys.dim(1) || ls.d_out != lp.values.dim(1)) {
            throw LoadError("checkpoint layer width mismatch: " + ls.name);
        }
        if (static_cast<std::int64_t>(ls.used.size()) != ls.rows) {
            throw LoadError("checkpoint usage mask length mismatch: " + ls.name);
        }
        pools.restore_layer_data(i, ls.keys, ls.values, ls.rows);
        used.push_back(ls.used);
    }
    pools.restore_growth(ck.growth_count);
    pools.restore_registry(ck.registry, std::move(used));

    if (static_cast<int>(ck.reports.size()) != ck.completed) {
        throw LoadError("checkpoint report count disagrees with completed count");
    }
    if (static_cast<int>(ck.matrix_rows.size()) != ck.completed) {
        throw LoadError("checkpoint matrix row count disagrees with completed count");
    }
    for (int p = 0; p < ck.completed; ++p) {
        const auto& row = ck.matrix_rows[static_cast<std::size_t>(p)];
        if (static_cast<int>(row.size()) != p + 1) {
            throw LoadError("checkpoint matrix row " + std::to_string(p) + " has wrong length");
        }
        for (int q = 0; q <= p; ++q) matrix_.set(p, q, row[static_cast<std::size_t>(q)]);
    }
    reports_ = ck.reports;
    completed_ = ck.completed;
}

TaskMask LifelongTrainer::build_mask(int position, const Task& task,
                                     const std::vector<double>& e) {
    const bool first = (position == 0);
    PoolBudget budget = policy_.budget();
    PoolSet& pools = policy_.pools();
    switch (cfg_.mode) {
        case RunMode::T2s:
            return pools.build_mask_language(task.id, e, budget, first);
        case RunMode::NaiveIndependent:
            budget.mu = 0.0;
            budget.refill = true;
            return pools.build_mask_language(task.id, e, budget, first);
        case RunMode::TaskId:
            return pools.build_mask_by_id(task.id, cfg_.seed, budget, first);
        case RunMode::Sequential: {
            if (first) return pools.build_mask_language(task.id, e, budget, true);
            const int first_id = suite_[static_cast<std::size_t>(order_[0])].id;
            TaskMask m = pools.task_mask(first_id);
            m.task_id = task.id;
            return m;
        }
    }
    throw ContractError("unknown run mode enum value");
}

TaskReport LifelongTrainer::train_next_task() {
    if (done()) throw ContractError("train_next_task: all tasks already trained");
    const int p = completed_;
    const Task& task = suite_[static_cast<std::size_t>(order_[static_cast<std::size_t>(p)])];
    const std::vector<double> e = policy_.embed_instruction(task.instruction);
    const bool first = (p == 0);
    const bool all_mask_rows = first || cfg_.mode == RunMode::Sequential;
    const ForwardMode fmode = all_mask_rows ? ForwardMode::Unified : ForwardMode::Split;

    const TaskMask mask = build_mask(p, task, e);
    PoolSet& pools = policy_.pools();
    PoolBudget budget = policy_.budget();
    if (cfg_.mode == RunMode::NaiveIndependent) {
        budget.mu = 0.0;
        budget.refill = true;
    }
    if (cfg_.mode == RunMode::Sequential && !first) {
        pools.store_mask_unchecked(mask);
    } else {
        pools.register_task(mask, budget, first);
    }

    TaskReport report;
    report.position = p;
    report.task_id = task.id;
    report.instruction = task.instruction;
    for (const TaskLayerMask& lm : mask.layers) {
        report.selected_rows += static_cast<std::int64_t>(lm.rows.size());
        report.shared_rows += static_cast<std::int64_t>(lm.shared.size());
        report.trainable_rows += static_cast<std::int64_t>(
            (all_mask_rows ? lm.rows : lm.specific).size());
    }

    Optimizer opt(cfg_.optim);
    for (std::size_t li = 0; li < pools.layer_count(); ++li) {
        const auto& rows = all_mask_rows ? mask.layers[li].rows : mask.layers[li].specific;
        if (rows.empty()) continue;  // empty registration would unfreeze the whole tensor
        opt.add_param(pools.layer(li).keys, rows);
        opt.add_param(pools.layer(li).values, rows);
    }

    const std::vector<Demonstration> demos =
        scripted_expert(task, cfg_.seed, cfg_.demos_per_task, cfg_.suite);
    struct Sample {
        int demo;
        int t;
    };
    std::vector<Sample> samples;
    for (int d = 0; d < static_cast<int>(demos.size()); ++d) {
        for (int t = 0; t < static_cast<int>(demos[static_cast<std::size_t>(d)].actions.size()); ++t) {
            samples.push_back({d, t});
        }
    }
    if (samples.empty()) throw ContractError("expert produced no training pairs");

    const std::int64_t W = cfg_.policy.window;
    const std::int64_t d_act = cfg_.policy.d_act;
    Rng mb = make_rng(mix_seed(cfg_.seed, "minibatch", static_cast<std::uint64_t>(task.id)));
    const std::size_t steps =
        (samples.size() + static_cast<std::size_t>(cfg_.batch) - 1) / static_cast<std::size_t>(cfg_.batch);

    bool first_loss_set = false;
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
        if (report.trainable_rows > 0) {
            for (std::size_t s = 0; s < steps; ++s) {
                std::vector<ObservationWindow> windows;
                std::vector<double> targets;
                windows.reserve(static_cast<std::size_t>(cfg_.batch));
                targets.reserve(static_cast<std::size_t>(cfg_.batch * d_act));
                for (int b = 0; b < cfg_.batch; ++b) {
                    const Sample& smp = samples[uniform_index(mb, samples.size())];
                    const Demonstration& demo = demos[static_cast<std::size_t>(smp.demo)];
                    const int lo = std::max(0, smp.t - static_cast<int>(W) + 1);
                    windows.emplace_back(demo.observations.begin() + lo,
                                         demo.observations.begin() + smp.t + 1);
                    for (double a : demo.actions[static_cast<std::size_t>(smp.t)]) targets.push_back(a);
                }
                Tensor target = Tensor::from_data(std::move(targets), {cfg_.batch, d_act});
                opt.zero_grad();
                Tensor pred = policy_.forward(windows, e, task.id, fmode);
                Tensor loss = bc_loss(pred, target);
                const double lv = loss.item();
                if (!(lv <= cfg_.divergence_guard)) {
                    throw DivergenceError(
                        "training diverged: loss=" + fmt_double(lv) + " task=" + std::to_string(task.id) +
                        " position=" + std::to_string(p) + " epoch=" + std::to_string(epoch) +
                        " step=" + std::to_string(s) + " mode=" + run_mode_name(cfg_.mode) +
                        " lr=" + fmt_double(cfg_.optim.lr));
                }
                if (!first_loss_set) {
                    report.first_loss = lv;
                    first_loss_set = true;
                }
                report.final_loss = lv;
                ops::backward(loss);
                opt.step();
            }
        }
        if (epoch == 0) report.fwt_one_epoch = evaluate_position(p);
    }

    for (int q = 0; q <= p; ++q) matrix_.set(p, q, evaluate_position(q));
    report.used_rows_after = pools.used_count_total();
    reports_.push_back(report);
    ++completed_;
    return report;
}

double LifelongTrainer::evaluate_position(int position) {
    if (position < 0 || position >= total()) {
        throw ContractError("evaluate_position: position " + std::to_string(position) + " out of range");
    }
    const Task& task = suite_[static_cast<std::size_t>(order_[static_cast<std::size_t>(position)])];
    const std::vector<double> e = policy_.embed_instruction(task.instruction);
    const Actor actor = make_policy_actor(policy_, e, task.id);
    return evaluate_policy(actor, task, cfg_.eval_episodes, cfg_.seed, cfg_.suite);
}

LifelongResult LifelongTrainer::result() {
    if (!done()) {
        throw ContractError("result: only " + std::to_string(completed_) + " of " +
                            std::to_string(total()) + " tasks trained");
    }
    LifelongResult out(matrix_);
    out.reports = reports_;
    out.config_hash = config_hash(cfg_);
    out.used_rows_total = policy_.pools().used_count_total();
    out.pool_rows_per_layer = policy_.pools().capacity();
    if (total() >= 2) {
        const MetricTriple t = compute_metrics(matrix_, cfg_.nbt_convention);
        out.fwt = t.fwt;
        out.auc = t.auc;
        out.nbt = t.nbt;
        out.nbt_defined = true;
        out.nbt_m = t.nbt_m;
        out.auc_m = t.auc_m;
    } else {
        out.fwt = fwt(matrix_);
        out.auc = auc(matrix_);
        out.auc_m = {matrix_.at(0, 0)};
    }
    return out;
}

Checkpoint LifelongTrainer::snapshot() const {
    Checkpoint ck;
    ck.config_hash = config_hash(cfg_);
    ck.seed = cfg_.seed;
    ck.total_tasks = total();
    ck.completed = completed_;
    const PoolSet& pools = policy_.pools();
    ck.growth_count = pools.growth_count();
    for (std::size_t i = 0; i < pools.layer_count(); ++i) {
        const LayerPool& lp = pools.layer(i);
        LayerState ls;
        ls.name = lp.name;
        ls.rows = lp.keys.dim(0);
        ls.d_in = lp.keys.dim(1);
        ls.d_out = lp.values.dim(1);
        ls.keys = lp.keys.vec();
        ls.values = lp.values.vec();
        ls.used = pools.used_mask(i);
        ck.layers.push_back(std::move(ls));
    }
    ck.registry = pools.registry();
    ck.reports = reports_;
    for (int p = 0; p < completed_; ++p) {
        std::vector<double> row;
        for (int q = 0; q <= p; ++q) row.push_back(matrix_.at(p, q));
        ck.matrix_rows.push_back(std::move(row));
    }
    return ck;
}

LifelongResult run_lifelong(const LifelongRunConfig& cfg) {
    LifelongTrainer trainer(cfg);
    while (!trainer.done()) trainer.train_next_task();
    return trainer.result();
}

namespace {

constexpr char kMagic[8] = {'T', '2', 'S', 'C', 'K', 'P', 'T', '\n'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}

void put_u32(std::string& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 8);
}

void put_i64(std::string& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    put_bytes(out, s.data(), s.size());
}

void put_f64_block(std::string& out, const std::vector<double>& v) {
    put_u64(out, v.size());
    for (double x : v) put_f64(out, x);
}

void put_rows(std::string& out, const std::vector<std::int64_t>& v) {
    put_u32(out, static_cast<std::uint32_t>(v.size()));
    for (std::int64_t x : v) put_i64(out, x);
}

class ByteReader {
  public:
    ByteReader(const std::string& buf, std::size_t pos) : buf_(buf), pos_(pos) {}

    std::size_t pos() const { return pos_; }

    const char* take(std::size_t n, const char* field) {
        if (pos_ + n > buf_.size()) {
            throw LoadError(std::string("checkpoint truncated while reading ") + field);
        }
        const char* p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::uint32_t u32(const char* field) {
        const char* p = take(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
        return v;
    }

    std::uint64_t u64(const char* field) {
        const char* p = take(8, field);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
        return v;
    }

    std::int64_t i64(const char* field) { return static_cast<std::int64_t>(u64(field)); }

    double f64(const char* field) {
        const std::uint64_t bits = u64(field);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    std::string str(const char* field) {
        const std::uint32_t n = u32(field);
        const char* p = take(n, field);
        return std::string(p, n);
    }

    std::vector<double> f64_block(const char* field) {
        const std::uint64_t n = u64(field);
        std::vector<double> v(n);
        for (std::uint64_t i = 0; i < n; ++i) v[i] = f64(field);
        return v;
    }

    std::vector<std::int64_t> rows(const char* field) {
        const std::uint32_t n = u32(field);
        std::vector<std::int64_t> v(n);
        for (std::uint32_t i = 0; i < n; ++i) v[i] = i64(field);
        return v;
    }

  private:
    const std::string& buf_;
    std::size_t pos_;
};

std::string encode_checkpoint(const Checkpoint& ck) {
    std::string payload;
    put_u64(payload, ck.config_hash);
    put_u64(payload, ck.seed);
    put_i64(payload, ck.total_tasks);
    put_i64(payload, ck.completed);
    put_i64(payload, ck.growth_count);
    put_u32(payload, static_cast<std::uint32_t>(ck.layers.size()));
    for (const LayerState& ls : ck.layers) {
        put_str(payload, ls.name);
        put_i64(payload, ls.rows);
        put_i64(payload, ls.d_in);
        put_i64(payload, ls.d_out);
        put_f64_block(payload, ls.keys);
        put_f64_block(payload, ls.values);
        put_u64(payload, ls.used.size());
        put_bytes(payload, ls.used.data(), ls.used.size());
    }
    put_u32(payload, static_cast<std::uint32_t>(ck.registry.size()));
    for (const auto& [task_id, mask] : ck.registry) {
        put_i64(payload, task_id);
        put_u32(payload, static_cast<std::uint32_t>(mask.layers.size()));
        for (const TaskLayerMask& lm : mask.layers) {
            put_rows(payload, lm.rows);
            put_rows(payload, lm.shared);
            put_rows(payload, lm.specific);
        }
    }
    put_u32(payload, static_cast<std::uint32_t>(ck.reports.size()));
    for (const TaskReport& r : ck.reports) {
        put_i64(payload, r.position);
        put_i64(payload, r.task_id);
        put_str(payload, r.instruction);
        put_i64(payload, r.selected_rows);
        put_i64(payload, r.shared_rows);
        put_i64(payload, r.trainable_rows);
        put_i64(payload, r.used_rows_after);
        put_f64(payload, r.fwt_one_epoch);
        put_f64(payload, r.first_loss);
        put_f64(payload, r.final_loss);
    }
    put_u32(payload, static_cast<std::uint32_t>(ck.matrix_rows.size()));
    for (const auto& row : ck.matrix_rows) put_f64_block(payload, row);

    std::string out(kMagic, sizeof kMagic);
    put_u32(out, kVersion);
    out += payload;
    put_u64(out, hash_str(payload));
    return out;
}

Checkpoint decode_checkpoint(const std::string& file) {
    if (file.size() < sizeof kMagic + 4 + 8 ||
        std::memcmp(file.data(), kMagic, sizeof kMagic) != 0) {
        throw LoadError("checkpoint magic bytes missing; not a checkpoint file");
    }
    ByteReader header(file, sizeof kMagic);
    const std::uint32_t version = header.u32("format version");
    if (version != kVersion) {
        throw LoadError("checkpoint format version " + std::to_string(version) +
                        " unsupported (expected " + std::to_string(kVersion) + ")");
    }
    const std::size_t payload_begin = header.pos();
    const std::size_t payload_end = file.size() - 8;
    ByteReader tail(file, payload_end);
    const std::uint64_t want = tail.u64("payload checksum");
    const std::uint64_t got =
        hash_str(std::string_view(file.data() + payload_begin, payload_end - payload_begin));
    if (want != got) throw LoadError("checkpoint payload checksum mismatch; file is corrupt");

    ByteReader r(file, payload_begin);
    Checkpoint ck;
    ck.config_hash = r.u64("config hash");
    ck.seed = r.u64("seed");
    ck.total_tasks = static_cast<int>(r.i64("total task count"));
    ck.completed = static_cast<int>(r.i64("completed task count"));
    ck.growth_count = r.i64("growth count");
    const std::uint32_t layers = r.u32("layer count");
    for (std::uint32_t i = 0; i < layers; ++i) {
        LayerState ls;
        ls.name = r.str("layer name");
        ls.rows = r.i64("layer rows");
        ls.d_in = r.i64("layer key width");
        ls.d_out = r.i64("layer value width");
        ls.keys = r.f64_block("layer keys");
        ls.values = r.f64_block("layer values");
        const std::uint64_t un = r.u64("usage mask length");
        const char* p = r.take(un, "usage mask");
        ls.used.assign(p, p + un);
        ck.layers.push_back(std::move(ls));
    }
    const std::uint32_t ntasks = r.u32("registry size");
    for (std::uint32_t i = 0; i < ntasks; ++i) {
        const int task_id = static_cast<int>(r.i64("registry task id"));
        TaskMask mask;
        mask.task_id = task_id;
        const std::uint32_t nl = r.u32("mask layer count");
        for (std::uint32_t li = 0; li < nl; ++li) {
            TaskLayerMask lm;
            lm.rows = r.rows("mask rows");
            lm.shared = r.rows("mask shared rows");
            lm.specific = r.rows("mask specific rows");
            mask.layers.push_back(std::move(lm));
        }
        ck.registry.emplace(task_id, std::move(mask));
    }
    const std::uint32_t nreports = r.u32("report count");
    for (std::uint32_t i = 0; i < nreports; ++i) {
        TaskReport rep;
        rep.position = static_cast<int>(r.i64("report position"));
        rep.task_id = static_cast<int>(r.i64("report task id"));
        rep.instruction = r.str("report instruction");
        rep.selected_rows = r.i64("report selected rows");
        rep.shared_rows = r.i64("report shared rows");
        rep.trainable_rows = r.i64("report trainable rows");
        rep.used_rows_after = r.i64("report used rows");
        rep.fwt_one_epoch = r.f64("report one-epoch success");
        rep.first_loss = r.f64("report first loss");
        rep.final_loss = r.f64("report final loss");
        ck.reports.push_back(std::move(rep));
    }
    const std::uint32_t nrows = r.u32("matrix row count");
    for (std::uint32_t i = 0; i < nrows; ++i) {
        ck.matrix_rows.push_back(r.f64_block("matrix row"));
    }
    if (r.pos() != payload_end) throw LoadError("checkpoint has trailing bytes after the matrix");
    return ck;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    const std::string bytes = encode_checkpoint(ck);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint " + path);
    std::string file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(file);
}

}  // namespace t2s
