#include "t2s/report.hpp"

#include <cstdio>
#include <cstring>

#include "doctest.h"
#include "json.hpp"
#include "t2s/errors.hpp"
#include "t2s/rng.hpp"

using namespace t2s;

namespace {

SuccessMatrix worked_matrix() {
    SuccessMatrix m(3);
    m.set(0, 0, 0.9);
    m.set(1, 0, 0.8);
    m.set(1, 1, 0.7);
    m.set(2, 0, 0.8);
    m.set(2, 1, 0.7);
    m.set(2, 2, 0.6);
    return m;
}

std::vector<TaskReport> sample_reports() {
    TaskReport a;
    a.position = 0;
    a.task_id = 1;
    a.instruction = "push the red block, gently, into the \"left\" zone";
    a.selected_rows = 48;
    a.shared_rows = 0;
    a.trainable_rows = 48;
    a.used_rows_after = 48;
    a.fwt_one_epoch = 0.5;
    a.first_loss = 0.125;
    a.final_loss = 0.03125;
    TaskReport b;
    b.position = 1;
    b.task_id = 2;
    b.instruction = "reach the target";
    b.selected_rows = 48;
    b.shared_rows = 20;
    b.trainable_rows = 28;
    b.used_rows_after = 76;
    b.fwt_one_epoch = 0.25;
    b.first_loss = 0.5;
    b.final_loss = 1e-3;
    return {a, b};
}

}  // namespace

TEST_CASE("hex16 is fixed width lowercase") {
    CHECK(hex16(0) == "0000000000000000");
    CHECK(hex16(0xdeadbeefULL) == "00000000deadbeef");
    CHECK(hex16(~0ULL) == "ffffffffffffffff");
}

TEST_CASE("success matrix table round-trips bit exactly") {
    SuccessMatrix m(4);
    Rng rng = make_rng(11);
    for (int i = 0; i < 4; ++i) {
        for (int q = 0; q <= i; ++q) m.set(i, q, uniform_double(rng));
    }
    const std::uint64_t h = 0x1234abcd5678ef00ULL;
    const std::string csv = render_success_matrix_csv(m, h);
    CHECK(csv.rfind("# manifest=1234abcd5678ef00\n", 0) == 0);
    CHECK(csv.find("after_task,on_task,success\n") != std::string::npos);
    const SuccessMatrix back = parse_success_matrix_csv(csv, h);
    REQUIRE(back.size() == 4);
    for (int i = 0; i < 4; ++i) {
        for (int q = 0; q <= i; ++q) {
            const double x = m.at(i, q), y = back.at(i, q);
            CHECK(std::memcmp(&x, &y, sizeof(double)) == 0);
        }
    }
    CHECK(render_success_matrix_csv(back, h) == csv);
}

TEST_CASE("table parsing refuses foreign or damaged input") {
    const std::uint64_t h = 7;
    const std::string csv = render_success_matrix_csv(worked_matrix(), h);
    CHECK_THROWS_AS((void)parse_success_matrix_csv(csv, 8), LoadError);
    CHECK_THROWS_AS((void)parse_success_matrix_csv("after_task,on_task,success\n0,0,1\n", h),
                    LoadError);
    CHECK_THROWS_AS((void)parse_success_matrix_csv("# manifest=" + hex16(h) + "\nwrong,header\n", h),
                    LoadError);
    CHECK_THROWS_AS((void)parse_success_matrix_csv("# manifest=" + hex16(h) +
                                                       "\nafter_task,on_task,success\n0,0\n",
                                                   h),
                    LoadError);
    CHECK_THROWS_AS((void)parse_success_matrix_csv("# manifest=" + hex16(h) +
                                                       "\nafter_task,on_task,success\n0,0,zap\n",
                                                   h),
                    LoadError);
    CHECK_THROWS_AS(
        (void)parse_success_matrix_csv("# manifest=" + hex16(h) + "\nafter_task,on_task,success\n",
                                       h),
        LoadError);
}

TEST_CASE("token ledger table round-trips including quoted instructions") {
    const std::vector<TaskReport> reports = sample_reports();
    const std::uint64_t h = 99;
    const std::string csv = render_ledger_csv(reports, h);
    const std::vector<TaskReport> back = parse_ledger_csv(csv, h);
    REQUIRE(back.size() == reports.size());
    for (std::size_t i = 0; i < reports.size(); ++i) {
        CHECK(back[i].position == reports[i].position);
        CHECK(back[i].task_id == reports[i].task_id);
        CHECK(back[i].instruction == reports[i].instruction);
        CHECK(back[i].selected_rows == reports[i].selected_rows);
        CHECK(back[i].shared_rows == reports[i].shared_rows);
        CHECK(back[i].trainable_rows == reports[i].trainable_rows);
        CHECK(back[i].used_rows_after == reports[i].used_rows_after);
        CHECK(back[i].fwt_one_epoch == reports[i].fwt_one_epoch);
        CHECK(back[i].first_loss == reports[i].first_loss);
        CHECK(back[i].final_loss == reports[i].final_loss);
    }
    CHECK(render_ledger_csv(back, h) == csv);
    CHECK_THROWS_AS((void)parse_ledger_csv(csv, h + 1), LoadError);
}

TEST_CASE("metrics table carries the convention and skips undefined rows") {
    LifelongResult res(worked_matrix());
    res.fwt = 0.7333333333333334;
    res.nbt_defined = true;
    res.nbt = 0.05;
    res.auc = 0.7111111111111111;
    res.nbt_m = {0.1, 0.0};
    res.auc_m = {0.8333333333333334, 0.7, 0.6};
    TaskReport r;
    r.position = 0;
    r.fwt_one_epoch = 0.4;
    res.reports = {r};
    const std::string csv = render_metrics_csv(res, NbtConvention::ExcludeFinal, 5);
    CHECK(csv.find("# manifest=" + hex16(5)) != std::string::npos);
    CHECK(csv.find(nbt_convention_label(NbtConvention::ExcludeFinal)) != std::string::npos);
    CHECK(csv.find("metric,task,value\n") != std::string::npos);
    CHECK(csv.find("fwt,,0.73333333333333339\n") != std::string::npos);
    CHECK(csv.find("nbt,,0.05") != std::string::npos);
    CHECK(csv.find("nbt_m,0,0.1") != std::string::npos);
    CHECK(csv.find("fwt_one_epoch,0,0.4") != std::string::npos);

    res.nbt_defined = false;
    const std::string single = render_metrics_csv(res, NbtConvention::ZeroFinal, 5);
    CHECK(single.find("\nnbt,,") == std::string::npos);
    CHECK(single.find(nbt_convention_label(NbtConvention::ZeroFinal)) != std::string::npos);
}

TEST_CASE("sweep table renders one row per run") {
    std::vector<SweepRow> rows;
    rows.push_back({"mu", "0", 7, 0.7, 0.0, 0.68, 1440});
    rows.push_back({"mu", "0.5", 7, 0.72, 0.0, 0.7, 1100});
    const std::string csv = render_sweep_csv(rows, 3);
    CHECK(csv.find("parameter,value,seed,fwt,nbt,auc,used_rows\n") != std::string::npos);
    CHECK(csv.find("mu,\"0.5\",7,0.71999999999999997") != std::string::npos);
    CHECK(csv.find("# manifest=" + hex16(3)) != std::string::npos);
}

TEST_CASE("figures are self-contained deterministic svg") {
    const SuccessMatrix m = worked_matrix();
    const std::vector<TaskReport> reports = sample_reports();
    const std::string curve = render_success_curve_svg(m, 21);
    const std::string bars = render_token_bars_svg(reports, 48, 21);
    const std::string sweep = render_sweep_plot_svg({"0", "0.5", "0.9"}, {0.7, 0.72, 0.69}, "mu", 21);
    for (const std::string* s : {&curve, &bars, &sweep}) {
        CHECK(s->rfind("<svg ", 0) == 0);
        CHECK(s->find("manifest=" + hex16(21)) != std::string::npos);
        CHECK(s->find("</svg>") != std::string::npos);
    }
    CHECK(curve.find("polyline") != std::string::npos);
    CHECK(bars.find("stroke-dasharray") != std::string::npos);
    CHECK(sweep.find("circle") != std::string::npos);
    CHECK(render_success_curve_svg(m, 21) == curve);
    CHECK(render_token_bars_svg(reports, 48, 21) == bars);
    CHECK(render_sweep_plot_svg({"0", "0.5", "0.9"}, {0.7, 0.72, 0.69}, "mu", 21) == sweep);
    CHECK_THROWS_AS((void)render_sweep_plot_svg({"0"}, {0.7, 0.8}, "mu", 21), ContractError);
}

TEST_CASE("summary text reports metrics and the ledger") {
    const std::string s =
        render_summary_text(worked_matrix(), sample_reports(), NbtConvention::ExcludeFinal, 77);
    CHECK(s.find("run " + hex16(77)) != std::string::npos);
    CHECK(s.find("fwt = 0.73333333333333339") != std::string::npos);
    CHECK(s.find("nbt = 0.049999999999999989") != std::string::npos);
    CHECK(s.find("auc = 0.71111111111111114") != std::string::npos);
    CHECK(s.find("push the red block") != std::string::npos);
    CHECK(s.find("cumulative trainable rows 76") != std::string::npos);
    CHECK(render_summary_text(worked_matrix(), sample_reports(), NbtConvention::ExcludeFinal, 77) ==
          s);
    SuccessMatrix solo(1);
    solo.set(0, 0, 0.9);
    const std::string one = render_summary_text(solo, {}, NbtConvention::ExcludeFinal, 1);
    CHECK(one.find("nbt undefined") != std::string::npos);
    CHECK(one.find("fwt = 0.9") != std::string::npos);
}

TEST_CASE("demo dump is valid versioned json") {
    SuiteParams params;
    params.K = 2;
    params.seed = 5;
    const std::vector<Task> tasks = make_suite(params);
    std::vector<std::vector<Demonstration>> demos;
    for (const Task& t : tasks) demos.push_back(scripted_expert(t, 5, 2, params));
    const std::string text = render_demos_json(tasks, demos, params, 404);
    const nlohmann::json j = nlohmann::json::parse(text);
    CHECK(j.at("format") == "t2s-demos-v1");
    CHECK(j.at("manifest") == hex16(404));
    CHECK(j.at("suite").at("tasks") == 2);
    REQUIRE(j.at("tasks").size() == 2);
    const auto& t0 = j.at("tasks").at(0);
    CHECK(t0.at("instruction").get<std::string>() == tasks[0].instruction);
    REQUIRE(t0.at("demonstrations").size() == 2);
    const auto& d0 = t0.at("demonstrations").at(0);
    CHECK(d0.at("observations").size() == d0.at("actions").size());
    CHECK(d0.at("observations").at(0).size() == 8);
}

TEST_CASE("text files round trip and missing files raise LoadError") {
    const std::string path = "report_io_test.txt";
    const std::string body = "line one\nline two\n";
    write_text_file(path, body);
    CHECK(read_text_file(path) == body);
    std::remove(path.c_str());
    CHECK_THROWS_AS((void)read_text_file(path), LoadError);
}
