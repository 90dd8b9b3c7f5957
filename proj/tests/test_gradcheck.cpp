#include "t2s/gradcheck.hpp"

#include <cstring>

#include "doctest.h"

using namespace t2s;

TEST_CASE("finite differences agree with the tape on every component") {
    const std::vector<GradCheckEntry> entries = run_gradcheck(1);
    REQUIRE(entries.size() == 5);
    CHECK(entries[0].component == "pattention");
    CHECK(entries[1].component == "pattention-split");
    CHECK(entries[2].component == "split-shared-rows-frozen");
    CHECK(entries[3].component == "tpst-block");
    CHECK(entries[4].component == "bc-loss");
    for (const GradCheckEntry& e : entries) {
        INFO(e.component);
        CHECK(e.pass);
        if (e.tolerance > 0.0) {
            CHECK(e.max_rel_err < e.tolerance);
            CHECK(e.tolerance == 1e-4);
        }
    }
}

TEST_CASE("shared rows get exactly zero gradient in split mode") {
    const std::vector<GradCheckEntry> entries = run_gradcheck(3);
    const GradCheckEntry& audit = entries[2];
    CHECK(audit.component == "split-shared-rows-frozen");
    CHECK(audit.tolerance == 0.0);
    CHECK(audit.max_rel_err == 0.0);
    CHECK(audit.pass);
}

TEST_CASE("gradcheck is deterministic in the seed") {
    const std::vector<GradCheckEntry> a = run_gradcheck(42);
    const std::vector<GradCheckEntry> b = run_gradcheck(42);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(std::memcmp(&a[i].max_rel_err, &b[i].max_rel_err, sizeof(double)) == 0);
    }
    const std::vector<GradCheckEntry> c = run_gradcheck(43);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].tolerance > 0.0 && a[i].max_rel_err != c[i].max_rel_err) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("gradcheck_passed folds the entry flags") {
    std::vector<GradCheckEntry> entries = run_gradcheck(1);
    CHECK(gradcheck_passed(entries));
    entries[1].pass = false;
    CHECK_FALSE(gradcheck_passed(entries));
    CHECK(gradcheck_passed({}));
}
