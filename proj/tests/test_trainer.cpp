#include "t2s/trainer.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "doctest.h"
#include "t2s/errors.hpp"

using namespace t2s;

namespace {

LifelongRunConfig tiny_cfg(int K, RunMode mode, std::uint64_t seed = 5) {
    LifelongRunConfig c;
    c.suite.K = K;
    c.policy.blocks = 1;
    c.policy.width = 16;
    c.policy.j = 8;
    c.policy.mu = 0.5;
    c.policy.window = 3;
    c.policy.capacity = 96;
    c.demos_per_task = 2;
    c.epochs = 2;
    c.batch = 8;
    c.eval_episodes = 2;
    c.optim.kind = OptKind::Adam;
    c.optim.lr = 3e-3;
    c.mode = mode;
    c.seed = seed;
    return c;
}

// Raw copies of every pool tensor, for bitwise change detection.
std::vector<std::vector<double>> pool_bytes(const PoolSet& pools) {
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < pools.layer_count(); ++i) {
        out.push_back(pools.layer(i).keys.vec());
        out.push_back(pools.layer(i).values.vec());
    }
    return out;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Rows of layer `li` whose key or value bytes changed between two snapshots.
std::set<std::int64_t> changed_rows(const std::vector<std::vector<double>>& before,
                                    const std::vector<std::vector<double>>& after,
                                    const PoolSet& pools, std::size_t li) {
    std::set<std::int64_t> out;
    const std::int64_t dk = pools.layer(li).keys.dim(1);
    const std::int64_t dv = pools.layer(li).values.dim(1);
    const std::int64_t n = pools.layer(li).keys.dim(0);
    const auto& kb = before[2 * li];
    const auto& ka = after[2 * li];
    const auto& vb = before[2 * li + 1];
    const auto& va = after[2 * li + 1];
    for (std::int64_t r = 0; r < n; ++r) {
        const bool key_moved = std::memcmp(kb.data() + r * dk, ka.data() + r * dk,
                                           static_cast<std::size_t>(dk) * sizeof(double)) != 0;
        const bool val_moved = std::memcmp(vb.data() + r * dv, va.data() + r * dv,
                                           static_cast<std::size_t>(dv) * sizeof(double)) != 0;
        if (key_moved || val_moved) out.insert(r);
    }
    return out;
}

}  // namespace

TEST_CASE("lifelong run fills the matrix and never forgets") {
    const LifelongRunConfig cfg = tiny_cfg(4, RunMode::T2s);
    LifelongResult res = run_lifelong(cfg);
    const int K = 4;
    REQUIRE(res.matrix.size() == K);
    for (int i = 0; i < K; ++i)
        for (int q = 0; q <= i; ++q) CHECK(res.matrix.has(i, q));

    // Frozen rows make every later evaluation of an old task bit-identical.
    for (int i = 0; i < K; ++i)
        for (int q = i + 1; q < K; ++q) CHECK(res.matrix.at(q, i) == res.matrix.at(i, i));
    CHECK(res.nbt_defined);
    CHECK(res.nbt == 0.0);
    for (double v : res.nbt_m) CHECK(v == 0.0);

    // Every trained row is fresh exactly once, so the ledger sums to the
    // usage count.
    std::int64_t trained = 0;
    bool any_shared = false;
    for (const TaskReport& r : res.reports) {
        trained += r.trainable_rows;
        if (r.shared_rows > 0) any_shared = true;
        CHECK(r.selected_rows == r.shared_rows + r.trainable_rows);
    }
    CHECK(trained == res.used_rows_total);
    const std::int64_t layers = 1 * 5 + 1;
    CHECK(res.used_rows_total <= K * cfg.policy.j * layers);
    if (any_shared) CHECK(res.used_rows_total < K * cfg.policy.j * layers);
    CHECK(any_shared);  // suite instructions overlap heavily
}

TEST_CASE("same seed reproduces the matrix bit for bit") {
    const LifelongRunConfig cfg = tiny_cfg(3, RunMode::T2s, 11);
    LifelongResult a = run_lifelong(cfg);
    LifelongResult b = run_lifelong(cfg);
    for (int i = 0; i < 3; ++i)
        for (int q = 0; q <= i; ++q) CHECK(a.matrix.at(i, q) == b.matrix.at(i, q));
    for (std::size_t i = 0; i < a.reports.size(); ++i) {
        CHECK(a.reports[i].fwt_one_epoch == b.reports[i].fwt_one_epoch);
        CHECK(a.reports[i].first_loss == b.reports[i].first_loss);
        CHECK(a.reports[i].final_loss == b.reports[i].final_loss);
        CHECK(a.reports[i].trainable_rows == b.reports[i].trainable_rows);
    }
}

TEST_CASE("only the specific rows of the new task ever move") {
    LifelongTrainer trainer(tiny_cfg(3, RunMode::T2s));
    trainer.train_next_task();
    const auto before = pool_bytes(trainer.policy().pools());
    const TaskReport rep = trainer.train_next_task();
    const auto after = pool_bytes(trainer.policy().pools());

    const PoolSet& pools = trainer.policy().pools();
    const int task2 = trainer.suite()[static_cast<std::size_t>(trainer.order()[1])].id;
    const TaskMask& mask = pools.task_mask(task2);
    std::int64_t audited = 0;
    for (std::size_t li = 0; li < pools.layer_count(); ++li) {
        const std::set<std::int64_t> moved = changed_rows(before, after, pools, li);
        const std::set<std::int64_t> specific(mask.layers[li].specific.begin(),
                                              mask.layers[li].specific.end());
        CHECK(moved == specific);
        audited += static_cast<std::int64_t>(moved.size());
    }
    CHECK(audited == rep.trainable_rows);
}

TEST_CASE("naive-independent takes j fresh rows per task") {
    const LifelongRunConfig cfg = tiny_cfg(3, RunMode::NaiveIndependent);
    LifelongResult res = run_lifelong(cfg);
    const std::int64_t layers = 1 * 5 + 1;
    for (const TaskReport& r : res.reports) {
        CHECK(r.trainable_rows == cfg.policy.j * layers);
        CHECK(r.shared_rows == 0);
    }
    CHECK(res.used_rows_total == 3 * cfg.policy.j * layers);
    // Fresh rows per task freeze just as well.
    for (int i = 0; i < 3; ++i)
        for (int q = i + 1; q < 3; ++q) CHECK(res.matrix.at(q, i) == res.matrix.at(i, i));
}

TEST_CASE("task-id selection keeps the freezing protocol") {
    LifelongResult res = run_lifelong(tiny_cfg(3, RunMode::TaskId));
    for (int i = 0; i < 3; ++i)
        for (int q = i + 1; q < 3; ++q) CHECK(res.matrix.at(q, i) == res.matrix.at(i, i));
    CHECK(res.nbt == 0.0);
    std::int64_t trained = 0;
    for (const TaskReport& r : res.reports) trained += r.trainable_rows;
    CHECK(trained == res.used_rows_total);
}

TEST_CASE("sequential mode reuses one row set and does overwrite it") {
    LifelongTrainer trainer(tiny_cfg(3, RunMode::Sequential));
    trainer.train_next_task();
    const auto before = pool_bytes(trainer.policy().pools());
    trainer.train_next_task();
    const auto after = pool_bytes(trainer.policy().pools());

    bool anything_moved = false;
    for (std::size_t i = 0; i < before.size(); ++i) {
        if (!bits_equal(before[i], after[i])) anything_moved = true;
    }
    CHECK(anything_moved);  // no freezing: task 2 rewrites task 1's rows

    trainer.train_next_task();
    LifelongResult res = trainer.result();
    const std::int64_t layers = 1 * 5 + 1;
    for (const TaskReport& r : res.reports) {
        CHECK(r.trainable_rows == res.reports[0].trainable_rows);
        CHECK(r.trainable_rows == 3LL * 8 * layers / 3);  // j rows per layer, constant
    }
    CHECK(res.used_rows_total == res.reports[0].trainable_rows);

    // All three tasks point at the same rows.
    const PoolSet& pools = trainer.policy().pools();
    const int id0 = trainer.suite()[static_cast<std::size_t>(trainer.order()[0])].id;
    for (int p = 1; p < 3; ++p) {
        const int idp = trainer.suite()[static_cast<std::size_t>(trainer.order()[p])].id;
        for (std::size_t li = 0; li < pools.layer_count(); ++li) {
            CHECK(pools.task_mask(idp).layers[li].rows == pools.task_mask(id0).layers[li].rows);
        }
    }
}

TEST_CASE("task order permutations keep the freezing protocol") {
    LifelongRunConfig cfg = tiny_cfg(3, RunMode::T2s);
    cfg.order = {2, 0, 1};
    LifelongResult res = run_lifelong(cfg);
    for (int i = 0; i < 3; ++i)
        for (int q = i + 1; q < 3; ++q) CHECK(res.matrix.at(q, i) == res.matrix.at(i, i));
    CHECK(res.nbt == 0.0);

    cfg.order = {0, 0, 1};
    CHECK_THROWS_AS(LifelongTrainer{cfg}, ConfigError);
    cfg.order = {0, 1};
    CHECK_THROWS_AS(LifelongTrainer{cfg}, ConfigError);
    cfg.order = {0, 1, 3};
    CHECK_THROWS_AS(LifelongTrainer{cfg}, ConfigError);
}

TEST_CASE("one-epoch probe equals the diagonal when training stops there") {
    LifelongRunConfig cfg = tiny_cfg(2, RunMode::T2s);
    cfg.epochs = 1;
    LifelongResult res = run_lifelong(cfg);
    CHECK(res.reports[0].fwt_one_epoch == res.matrix.at(0, 0));
    CHECK(res.reports[1].fwt_one_epoch == res.matrix.at(1, 1));
}

TEST_CASE("single-task run leaves nbt undefined") {
    LifelongResult res = run_lifelong(tiny_cfg(1, RunMode::T2s));
    CHECK(res.matrix.size() == 1);
    CHECK(!res.nbt_defined);
    CHECK(res.fwt == res.matrix.at(0, 0));
    CHECK(res.auc == res.matrix.at(0, 0));
}

TEST_CASE("runaway loss aborts with a diagnostic") {
    LifelongRunConfig cfg = tiny_cfg(2, RunMode::T2s);
    cfg.optim.kind = OptKind::SgdMomentum;
    cfg.optim.lr = 1e12;
    LifelongTrainer trainer(cfg);
    CHECK_THROWS_AS(trainer.train_next_task(), DivergenceError);
}

TEST_CASE("trainer guards its lifecycle") {
    LifelongTrainer trainer(tiny_cfg(1, RunMode::T2s));
    CHECK_THROWS_AS(trainer.result(), ContractError);
    CHECK_THROWS_AS(trainer.evaluate_position(5), ContractError);
    trainer.train_next_task();
    CHECK_THROWS_AS(trainer.train_next_task(), ContractError);
}

TEST_CASE("config text is canonical and hash-stable") {
    LifelongRunConfig cfg = tiny_cfg(3, RunMode::T2s);
    const std::string text = canonical_config_text(cfg);
    CHECK(text.find("mode=t2s\n") != std::string::npos);
    CHECK(text.find("order=0,1,2\n") != std::string::npos);
    CHECK(text.find("policy_j=8\n") != std::string::npos);
    CHECK(text.find("suite_tasks=3\n") != std::string::npos);

    LifelongRunConfig explicit_order = cfg;
    explicit_order.order = {0, 1, 2};
    CHECK(config_hash(cfg) == config_hash(explicit_order));

    LifelongRunConfig other = cfg;
    other.mode = RunMode::Sequential;
    CHECK(config_hash(cfg) != config_hash(other));
    other = cfg;
    other.seed = 6;
    CHECK(config_hash(cfg) != config_hash(other));

    CHECK(run_mode_from_string("naive-independent") == RunMode::NaiveIndependent);
    CHECK_THROWS_AS(run_mode_from_string("bogus"), ConfigError);
    CHECK(std::string(run_mode_name(RunMode::TaskId)) == "task-id");
}

TEST_CASE("checkpoint round-trips bit for bit") {
    const LifelongRunConfig cfg = tiny_cfg(3, RunMode::T2s, 21);
    LifelongTrainer trainer(cfg);
    trainer.train_next_task();
    trainer.train_next_task();
    const Checkpoint ck = trainer.snapshot();

    const std::string path = (std::filesystem::temp_directory_path() / "t2s_ck_test.bin").string();
    save_checkpoint(ck, path);
    const Checkpoint back = load_checkpoint(path);

    CHECK(back.config_hash == ck.config_hash);
    CHECK(back.seed == ck.seed);
    CHECK(back.completed == 2);
    CHECK(back.total_tasks == 3);
    CHECK(back.growth_count == ck.growth_count);
    REQUIRE(back.layers.size() == ck.layers.size());
    for (std::size_t i = 0; i < ck.layers.size(); ++i) {
        CHECK(back.layers[i].name == ck.layers[i].name);
        CHECK(bits_equal(back.layers[i].keys, ck.layers[i].keys));
        CHECK(bits_equal(back.layers[i].values, ck.layers[i].values));
        CHECK(back.layers[i].used == ck.layers[i].used);
    }
    REQUIRE(back.registry.size() == ck.registry.size());
    for (const auto& [id, mask] : ck.registry) {
        REQUIRE(back.registry.count(id) == 1);
        const TaskMask& bm = back.registry.at(id);
        for (std::size_t li = 0; li < mask.layers.size(); ++li) {
            CHECK(bm.layers[li].rows == mask.layers[li].rows);
            CHECK(bm.layers[li].shared == mask.layers[li].shared);
            CHECK(bm.layers[li].specific == mask.layers[li].specific);
        }
    }
    REQUIRE(back.matrix_rows.size() == 2);
    CHECK(back.matrix_rows[1].size() == 2);
    CHECK(back.matrix_rows[1][0] == ck.matrix_rows[1][0]);
    REQUIRE(back.reports.size() == 2);
    CHECK(back.reports[1].instruction == ck.reports[1].instruction);
    CHECK(back.reports[1].fwt_one_epoch == ck.reports[1].fwt_one_epoch);
    std::filesystem::remove(path);
}

TEST_CASE("resuming mid-sequence matches the uninterrupted run") {
    const LifelongRunConfig cfg = tiny_cfg(4, RunMode::T2s, 31);

    LifelongTrainer full(cfg);
    while (!full.done()) full.train_next_task();
    LifelongResult want = full.result();

    LifelongTrainer head(cfg);
    head.train_next_task();
    head.train_next_task();
    const std::string path =
        (std::filesystem::temp_directory_path() / "t2s_ck_resume.bin").string();
    save_checkpoint(head.snapshot(), path);

    LifelongTrainer tail(cfg, load_checkpoint(path));
    CHECK(tail.completed() == 2);
    while (!tail.done()) tail.train_next_task();
    LifelongResult got = tail.result();

    for (int i = 0; i < 4; ++i)
        for (int q = 0; q <= i; ++q) CHECK(got.matrix.at(i, q) == want.matrix.at(i, q));
    CHECK(got.used_rows_total == want.used_rows_total);
    for (std::size_t i = 0; i < want.reports.size(); ++i) {
        CHECK(got.reports[i].fwt_one_epoch == want.reports[i].fwt_one_epoch);
        CHECK(got.reports[i].final_loss == want.reports[i].final_loss);
    }
    CHECK(bits_equal(pool_bytes(tail.policy().pools())[0], pool_bytes(full.policy().pools())[0]));
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint loading refuses wrong configs and corrupt files") {
    const LifelongRunConfig cfg = tiny_cfg(2, RunMode::T2s, 41);
    LifelongTrainer trainer(cfg);
    trainer.train_next_task();
    const std::string path =
        (std::filesystem::temp_directory_path() / "t2s_ck_guard.bin").string();
    save_checkpoint(trainer.snapshot(), path);

    LifelongRunConfig other = cfg;
    other.epochs += 1;
    CHECK_THROWS_AS(LifelongTrainer(other, load_checkpoint(path)), LoadError);

    std::string bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }

    std::string flipped = bytes;
    flipped[flipped.size() / 2] = static_cast<char>(flipped[flipped.size() / 2] ^ 0xff);
    const std::string bad = path + ".bad";
    {
        std::ofstream out(bad, std::ios::binary);
        out.write(flipped.data(), static_cast<std::streamsize>(flipped.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(bad), LoadError);

    std::string truncated = bytes.substr(0, bytes.size() / 3);
    {
        std::ofstream out(bad, std::ios::binary);
        out.write(truncated.data(), static_cast<std::streamsize>(truncated.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(bad), LoadError);

    std::string wrong_magic = bytes;
    wrong_magic[0] = 'X';
    {
        std::ofstream out(bad, std::ios::binary);
        out.write(wrong_magic.data(), static_cast<std::streamsize>(wrong_magic.size()));
    }
    CHECK_THROWS_AS(load_checkpoint(bad), LoadError);

    CHECK_THROWS_AS(load_checkpoint(path + ".missing"), LoadError);
    std::filesystem::remove(path);
    std::filesystem::remove(bad);
}
