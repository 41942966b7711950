#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "sembayes/evaluation.hpp"
#include "sembayes/similarity.hpp"

using namespace sembayes;

namespace {

// Fraction of (positive, negative) pairs ranked correctly, ties one half.
double pairwise_auroc(const std::vector<double>& s, const std::vector<int>& l) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (l[i] != 1 || l[j] != 0) continue;
            den += 1.0;
            num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
        }
    }
    return num / den;
}

struct SmallWorkload {
    SimulatedWorkload sim;
    GroundTruthOracle oracle;
    TfCosineSimilarity similarity;
    Workload workload;

    explicit SmallWorkload(std::size_t prompts)
        : sim(synthesize_workload({prompts, 4, 7})), oracle(sim.lm) {
        workload.generator = &sim.lm;
        workload.oracle = &oracle;
        workload.similarity = &similarity;
        workload.exact_entropy = [this](const std::string& p) { return simulated_exact_entropy(sim.lm, p); };
    }
};

EstimatorConfig fast_config() {
    EstimatorConfig c;
    c.n_max = 6;
    c.snis_draws = 256;
    c.seed = 11;
    return c;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("parse_dataset") {
    SUBCASE("records and blank lines") {
        std::istringstream in(
            "{\"id\": \"a\", \"prompt\": \"p1\", \"label\": 1}\n"
            "\n"
            "{\"id\": \"b\", \"prompt\": \"p2\", \"label\": false, \"reference\": \"x\"}\n"
            "{\"id\": \"c\", \"prompt\": \"p3\"}\n");
        const auto recs = parse_dataset(in);
        REQUIRE(recs.size() == 3);
        CHECK(recs[0].label == 1);
        CHECK(recs[1].label == 0);
        CHECK(recs[1].reference == "x");
        CHECK_FALSE(recs[2].label.has_value());
    }
    SUBCASE("malformed line carries its number") {
        std::istringstream in("{\"id\": \"a\", \"prompt\": \"p\"}\n{not json\n");
        try {
            parse_dataset(in);
            FAIL("expected DatasetError");
        } catch (const DatasetError& e) {
            CHECK(e.line() == 2);
        }
    }
    SUBCASE("duplicate id names the id") {
        std::istringstream in("{\"id\": \"a\", \"prompt\": \"p\"}\n{\"id\": \"a\", \"prompt\": \"q\"}\n");
        try {
            parse_dataset(in);
            FAIL("expected DatasetError");
        } catch (const DatasetError& e) {
            CHECK(e.line() == 2);
            CHECK(std::string(e.what()).find("'a'") != std::string::npos);
        }
    }
    SUBCASE("missing fields and bad labels") {
        std::istringstream no_prompt("{\"id\": \"a\"}\n");
        CHECK_THROWS_AS(parse_dataset(no_prompt), DatasetError);
        std::istringstream bad_label("{\"id\": \"a\", \"prompt\": \"p\", \"label\": 2}\n");
        CHECK_THROWS_AS(parse_dataset(bad_label), DatasetError);
    }
    SUBCASE("write and reload") {
        const std::vector<QueryRecord> recs{{"x", "hello", 1, std::nullopt}, {"y", "bye", std::nullopt, "ref"}};
        const auto path = temp_path("sembayes_dataset_test.jsonl");
        write_dataset(path, recs);
        const auto back = load_dataset(path);
        std::filesystem::remove(path);
        REQUIRE(back.size() == 2);
        CHECK(back[0].id == "x");
        CHECK(back[0].label == 1);
        CHECK(back[1].reference == "ref");
    }
    CHECK_THROWS_AS(load_dataset("/nonexistent/data.jsonl"), DatasetError);
}

TEST_CASE("auroc") {
    const std::vector<int> labels{0, 0, 1, 1};
    CHECK(auroc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, labels) == doctest::Approx(1.0));
    CHECK(auroc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, labels) == doctest::Approx(0.0));
    CHECK(auroc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, labels) == doctest::Approx(0.5));
    CHECK(auroc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, labels) == doctest::Approx(0.75));
    CHECK(auroc(std::vector<double>{0.9, 0.8, 0.7, 0.1}, std::vector<int>{1, 0, 1, 0}) == doctest::Approx(0.75));

    CHECK_THROWS_AS(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), std::invalid_argument);
    CHECK_THROWS_AS(auroc(std::vector<double>{0.1}, std::vector<int>{1, 0}), std::invalid_argument);
    CHECK_THROWS_AS(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{2, 0}), std::invalid_argument);

    // Heavily tied scores against the pairwise definition.
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> s(40);
        std::vector<int> l(40);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = static_cast<double>(rng() % 6);
            l[i] = static_cast<int>(rng() % 2);
        }
        l[0] = 0;
        l[1] = 1;
        CHECK(auroc(s, l) == doctest::Approx(pairwise_auroc(s, l)).epsilon(1e-12));
        std::vector<double> t(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(3.0 * s[i]) - 7.0;
        CHECK(auroc(t, l) == auroc(s, l));
    }
}

TEST_CASE("result records round-trip") {
    const std::vector<ResultRecord> rs{{"a", 0.5, 0.01, 4, 2, Termination::threshold, 1.5},
                                       {"b", 1.2, 0.2, 10, 3, Termination::budget, 4.0}};
    const auto path = temp_path("sembayes_results_test.jsonl");
    write_results(path, rs);
    const auto back = load_results(path);
    std::filesystem::remove(path);
    REQUIRE(back.size() == 2);
    CHECK(back[1].id == "b");
    CHECK(back[1].entropy == 1.2);
    CHECK(back[1].samples_used == 10);
    CHECK(back[1].terminated_by == Termination::budget);
    CHECK(back[0].k_map == 2);
    CHECK_THROWS_AS(result_from_json(nlohmann::json{{"id", "x"}}), std::invalid_argument);
}

TEST_CASE("synthesized workload") {
    const auto a = synthesize_workload({30, 5, 3});
    const auto b = synthesize_workload({30, 5, 3});
    REQUIRE(a.queries.size() == 30);
    CHECK(a.lm.to_json() == b.lm.to_json());
    int positives = 0;
    for (const auto& q : a.queries) {
        REQUIRE(q.label.has_value());
        CHECK(simulated_label(a.lm, q.prompt) == q.label);
        positives += *q.label;
        const auto dist = a.lm.meaning_distribution(q.prompt);
        const double h = simulated_exact_entropy(a.lm, q.prompt);
        CHECK(h >= 0.0);
        CHECK(h <= std::log(static_cast<double>(dist.size())) + 1e-12);
    }
    CHECK(positives > 0);
    CHECK(positives < 30);
    CHECK_THROWS_AS(synthesize_workload({5, 0, 1}), std::invalid_argument);
}

TEST_CASE("runs do not depend on the worker count") {
    SmallWorkload w(12);
    const auto cfg = fast_config();
    const auto one = run_adaptive(w.sim.queries, w.workload, cfg, 1);
    const auto three = run_adaptive(w.sim.queries, w.workload, cfg, 3);
    REQUIRE(one.size() == three.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
        CHECK(one[i].mean == three[i].mean);
        CHECK(one[i].samples_used == three[i].samples_used);
    }
    const auto f1 = run_fixed(w.sim.queries, w.workload, 3, 4, 1);
    const auto f3 = run_fixed(w.sim.queries, w.workload, 3, 4, 3);
    CHECK(f1 == f3);
    CHECK(prompt_seed(1, "a") != prompt_seed(1, "b"));
}

TEST_CASE("calibrate_gamma") {
    SmallWorkload w(15);
    const auto cfg = fast_config();
    const auto cal = calibrate_gamma(w.sim.queries, w.workload, cfg, 3.0);
    CHECK(std::abs(cal.achieved_mean - 3.0) <= 0.25);
    CHECK(cal.steps <= 12);
    CHECK(cal.gamma >= 1e-6);
    CHECK(cal.gamma <= 10.0);

    double top = 0.0;
    try {
        calibrate_gamma(w.sim.queries, w.workload, cfg, 5.9);
        FAIL("expected CalibrationError");
    } catch (const CalibrationError& e) {
        // Single-meaning prompts settle before the cap even at the smallest gamma.
        CHECK(e.max_mean() < 5.65);
        CHECK(e.min_mean() >= 1.0);
        top = e.max_mean();
    }
    CHECK_THROWS_AS(calibrate_gamma(w.sim.queries, w.workload, cfg, 1.0), CalibrationError);
    CHECK_THROWS_AS(calibrate_gamma(w.sim.queries, w.workload, cfg, 7.0), CalibrationError);

    SUBCASE("top of the achievable range") {
        const auto capped = calibrate_gamma(w.sim.queries, w.workload, cfg, top);
        CHECK(std::abs(capped.achieved_mean - top) <= 0.25);
        CHECK(capped.gamma < 1e-2);
    }
    CHECK_THROWS_AS(calibrate_gamma({}, w.workload, cfg, 3.0), std::invalid_argument);
}

TEST_CASE("run_benchmark") {
    SmallWorkload w(15);
    const auto cfg = fast_config();
    BenchmarkOptions opts;
    opts.budgets = {2.0, 5.0};
    const auto report = run_benchmark(w.sim.queries, w.workload, cfg, opts);
    REQUIRE(report.rows.size() == 4);
    CHECK(report.rows[0].method == "fixed-se@2");
    CHECK(report.rows[1].method == "adaptive@2");
    CHECK(report.rows[3].method == "adaptive@5");
    REQUIRE(report.histograms.size() == 2);
    for (const auto& [method, counts] : report.histograms) {
        std::size_t total = 0;
        for (const auto& [n, c] : counts) total += c;
        CHECK(total == w.sim.queries.size());
    }
    for (const auto& row : report.rows) {
        CHECK(row.rmse.has_value());
        CHECK(row.generator_calls > 0);
    }
    CHECK(report.rows[0].generator_calls == 2 * w.sim.queries.size());

    const auto again = run_benchmark(w.sim.queries, w.workload, cfg, opts);
    CHECK(report.to_json().dump() == again.to_json().dump());
    CHECK(report.rows_csv() == again.rows_csv());
    CHECK(report.rows_csv().rfind("method,budget,", 0) == 0);
    CHECK(report.histogram_csv().find("adaptive@2,") != std::string::npos);

    SUBCASE("fractional budget has no fixed row") {
        BenchmarkOptions frac;
        frac.budgets = {2.5};
        const auto r = run_benchmark(w.sim.queries, w.workload, cfg, frac);
        REQUIRE(r.rows.size() == 1);
        CHECK(r.rows[0].method == "adaptive@2.5");
    }
    SUBCASE("nothing to score against") {
        std::vector<QueryRecord> unlabeled = w.sim.queries;
        for (auto& q : unlabeled) q.label.reset();
        Workload bare = w.workload;
        bare.exact_entropy = nullptr;
        CHECK_THROWS_AS(run_benchmark(unlabeled, bare, cfg, opts), DatasetError);
    }
}
