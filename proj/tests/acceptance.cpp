// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. All tolerances are fixed here.

#include "fieldrank/evaluation.hpp"
#include "fieldrank/experiment.hpp"
#include "fieldrank/ingestion.hpp"
#include "fieldrank/interaction.hpp"
#include "fieldrank/models.hpp"
#include "fieldrank/rng.hpp"
#include "fieldrank/selection.hpp"
#include "fieldrank/stats.hpp"
#include "fieldrank/training.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace fieldrank;
namespace fs = std::filesystem;

namespace {

constexpr double kNdcgTol = 1e-12;
constexpr double kNdcgSeconds = 5.0;
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr std::size_t kRandomSessions = 200000;
constexpr double kRandomTol = 0.005;
constexpr double kStatsTol = 1e-9;
constexpr double kGapMin = 0.05;
constexpr double kAlpha = 0.01;
constexpr std::size_t kTopRank = 3;
constexpr std::size_t kTopFoldsMin = 8;
constexpr double kSelectedSlack = 0.005;

// Training settings for the end-to-end run; everything else is the library default.
constexpr double kE2eLearningRate = 0.01;
constexpr std::size_t kE2eBatch = 64;
constexpr std::uint64_t kE2eSeed = 7;
constexpr std::uint64_t kE2eBuckets = 4096;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof(buf), format, a, b, c);
    return buf;
}

std::string read_file(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

double brute_ndcg(const std::vector<double>& s, const std::vector<int>& rel, std::size_t k)
{
    double dcg = 0.0;
    std::size_t n_rel = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        n_rel += rel[i] != 0;
        std::size_t rank = 1;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (s[j] > s[i] || (s[j] == s[i] && j < i)) {
                ++rank;
            }
        }
        if (rel[i] != 0 && rank <= k) {
            dcg += 1.0 / std::log2(static_cast<double>(rank) + 1.0);
        }
    }
    double idcg = 0.0;
    for (std::size_t r = 1; r <= std::min(n_rel, k); ++r) {
        idcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    }
    return dcg / idcg;
}

Outcome ndcg_oracle()
{
    Rng rng(20240601);
    std::vector<std::vector<double>> scores;
    std::vector<std::vector<int>> rels;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 1 + rng.below(40);
        std::vector<double> s(n);
        std::vector<int> r(n);
        for (std::size_t j = 0; j < n; ++j) {
            // Coarse scores so ties occur.
            s[j] = static_cast<double>(rng.below(10)) / 10.0;
            r[j] = rng.bernoulli(0.3) ? 1 : 0;
        }
        r[rng.below(n)] = 1;
        scores.push_back(std::move(s));
        rels.push_back(std::move(r));
    }
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto got = ndcg_at_k(scores[i], rels[i], 20);
        const double diff = got ? std::abs(*got - brute_ndcg(scores[i], rels[i], 20)) : 1.0;
        worst = std::max(worst, diff);
    }
    const double secs = seconds_since(t0);
    return {worst <= kNdcgTol && secs < kNdcgSeconds, fmt("max diff %.3g, %.2f s", worst, secs)};
}

Outcome gradients()
{
    // The six required variants plus the two query-field siblings.
    const std::vector<std::string> required{"concat",           "nrmf query-field",       "nrmf query-field+first",
                                            "nrmf all",         "fwfm all",               "fwfm query-field",
                                            "fwfm query-field+first", "fwfm second-order"};
    std::map<std::string, ModelConfig> variants;
    for (auto& [name, config] : gradcheck_variants()) {
        variants.emplace(name, config);
    }
    const auto t0 = Clock::now();
    double worst = 0.0;
    std::string worst_name;
    std::uint64_t seed = 12345;
    for (const auto& name : required) {
        auto it = variants.find(name);
        if (it == variants.end()) {
            return {false, "missing variant " + name};
        }
        GradCheckOptions o;
        o.instances = 20;
        o.d = 8;
        const auto r = gradient_check(it->second, seed++, o);
        if (r.max_rel_error >= worst) {
            worst = r.max_rel_error;
            worst_name = name;
        }
    }
    const double secs = seconds_since(t0);
    return {worst < kGradTol && secs < kGradSeconds,
            fmt("max rel error %.3g", worst) + " (" + worst_name + ")" + fmt(", %.1f s", secs)};
}

Outcome interaction_counts()
{
    std::size_t checks = 0;
    for (std::size_t k = 2; k <= 10; ++k) {
        for (std::size_t q = 0; q < k; ++q) {
            if (enumerate_index_interactions(k, q, SelectQueryField{}, false).size() != k - 1 ||
                enumerate_index_interactions(k, q, SelectSecondOrderAll{}, false).size() != k * (k - 1) / 2 ||
                enumerate_index_interactions(k, q, SelectAll{}, true).size() != k * (k + 1) / 2) {
                return {false, "count mismatch at k=" + std::to_string(k)};
            }
            ++checks;
        }
    }
    const std::vector<FieldId> six(kAllFields.begin(), kAllFields.end());
    const std::size_t qf = enumerate_interactions(six, SelectQueryField{}, false).size();
    const std::size_t so = enumerate_interactions(six, SelectSecondOrderAll{}, false).size();
    const std::size_t all = enumerate_interactions(six, SelectAll{}, true).size();
    const bool ok = qf == 5 && so == 15 && all == 21;
    return {ok, std::to_string(checks) + " (k, query) cases; six fields give " + std::to_string(qf) + ", " +
                    std::to_string(so) + ", " + std::to_string(all)};
}

Outcome truncation()
{
    Rng rng(77);
    std::size_t sessions = 0;
    for (int round = 0; round < 300; ++round) {
        std::vector<RawLogRecord> records;
        std::map<std::string, std::set<std::string>> clicked;
        std::map<std::string, std::vector<std::string>> lists;
        const std::size_t n_sessions = 1 + rng.below(15);
        for (std::size_t s = 0; s < n_sessions; ++s) {
            const std::string sid = "s" + std::to_string(s);
            std::vector<std::string> list;
            const std::size_t len = 1 + rng.below(40);
            for (std::size_t i = 0; i < len; ++i) {
                list.push_back("doc" + std::to_string(rng.below(1000000)) + "_" + std::to_string(i));
            }
            lists[sid] = list;
            const std::size_t n_clicks = 1 + rng.below(5);
            for (std::size_t c = 0; c < n_clicks; ++c) {
                const auto& doc = list[rng.below(len)];
                clicked[sid].insert(doc);
                records.push_back({sid, static_cast<std::int64_t>(rng.below(1000)), "q", list, doc});
            }
        }
        rng.shuffle(records);
        const auto built = build_sessions(records);
        if (built.sessions.size() != n_sessions) {
            return {false, "session count mismatch"};
        }
        for (const auto& s : built.sessions) {
            const auto& list = lists.at(s.session_id);
            if (s.clicked_positions.empty() || s.clicked_positions.back() + 1 != s.candidates.size()) {
                return {false, "session " + s.session_id + " does not end at a click"};
            }
            if (!std::equal(s.candidates.begin(), s.candidates.end(), list.begin())) {
                return {false, "session " + s.session_id + " is not a prefix of its list"};
            }
            std::set<std::string> positives;
            for (auto p : s.clicked_positions) {
                positives.insert(s.candidates[p]);
            }
            if (positives != clicked.at(s.session_id)) {
                return {false, "session " + s.session_id + " positives differ from clicks"};
            }
            std::size_t last = 0;
            for (std::size_t i = 0; i < list.size(); ++i) {
                if (clicked.at(s.session_id).contains(list[i])) {
                    last = i;
                }
            }
            if (s.candidates.size() != last + 1) {
                return {false, "session " + s.session_id + " keeps items after the last click"};
            }
            ++sessions;
        }
    }
    return {true, std::to_string(sessions) + " sessions"};
}

Outcome random_expectation()
{
    constexpr std::size_t n = 7;
    double expected = 0.0;
    for (std::size_t r = 1; r <= n; ++r) {
        expected += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    }
    expected /= static_cast<double>(n);

    ModelConfig random;
    random.family = ModelFamily::Random;
    random.seed = 4242;
    Rng rng(99);
    double sum = 0.0;
    std::vector<int> rel(n);
    for (std::size_t i = 0; i < kRandomSessions; ++i) {
        std::fill(rel.begin(), rel.end(), 0);
        rel[rng.below(n)] = 1;
        const auto scores = random_scores(random.seed, "session-" + std::to_string(i), n);
        sum += *ndcg_at_k(scores, rel, 20);
    }
    const double mean = sum / static_cast<double>(kRandomSessions);
    return {std::abs(mean - expected) <= kRandomTol,
            fmt("mean %.5f, expected %.5f, diff %.5f", mean, expected, std::abs(mean - expected))};
}

Outcome statistics()
{
    Rng rng(2718);
    double worst_t = 0.0;
    double worst_p = 0.0;
    for (int i = 0; i < 100; ++i) {
        std::vector<double> a(10), b(10);
        const double shift = rng.uniform(-0.05, 0.05);
        for (std::size_t j = 0; j < 10; ++j) {
            a[j] = 0.6 + 0.05 * rng.normal();
            b[j] = 0.6 + shift + 0.05 * rng.normal();
        }
        long double md = 0.0L;
        for (std::size_t j = 0; j < 10; ++j) {
            md += static_cast<long double>(a[j]) - b[j];
        }
        md /= 10.0L;
        long double ss = 0.0L;
        for (std::size_t j = 0; j < 10; ++j) {
            const long double d = static_cast<long double>(a[j]) - b[j] - md;
            ss += d * d;
        }
        const double t_ref = static_cast<double>(md / std::sqrt(ss / 9.0L / 10.0L));
        const boost::math::students_t dist(9.0);
        const double p_ref = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t_ref)));
        const auto got = paired_ttest(a, b);
        worst_t = std::max(worst_t, std::abs(got.t - t_ref) / std::max(1.0, std::abs(t_ref)));
        worst_p = std::max(worst_p, std::abs(got.p - p_ref));
    }
    const auto bf = bonferroni(std::vector<double>{0.004}, 10);
    const bool bf_ok = bf.size() == 1 && bf[0] == 0.04;
    bool monotone = true;
    for (int i = 0; i < 1000; ++i) {
        const double p = rng.uniform();
        const std::size_t m = 1 + rng.below(50);
        monotone = monotone && bonferroni(std::vector<double>{p}, m)[0] >= p;
    }
    return {worst_t <= kStatsTol && worst_p <= kStatsTol && bf_ok && monotone,
            fmt("t diff %.3g, p diff %.3g, bonferroni(0.004, 10) = %.17g", worst_t, worst_p, bf.empty() ? -1 : bf[0])};
}

std::string e2e_config(const fs::path& out)
{
    nlohmann::json j{{"seed", kE2eSeed},
                     {"synthgen", {{"n_sessions", 2000}}},
                     {"encoder", {{"bucket_count", kE2eBuckets}}},
                     {"train", {{"learning_rate", kE2eLearningRate}, {"batch_size", kE2eBatch}}},
                     {"folds", 10},
                     {"models",
                      {{{"name", "random"}, {"family", "random"}},
                       {{"name", "fwfm-qf"}, {"family", "fwfm"}, {"interactions", "query-field"}},
                       {{"name", "fwfm-all"}, {"family", "fwfm"}, {"interactions", "all"}}}},
                     {"out", out.string()}};
    return j.dump(2);
}

Outcome signal_recovery(const fs::path& work)
{
    const auto t0 = Clock::now();
    if (GenConfig{}.planted_weights.at("title-country") != 2.0) {
        return {false, "generator default title-country strength is not 2.0"};
    }
    const fs::path config = work / "e2e.json";
    const fs::path out = work / "e2e";
    write_file(config, e2e_config(out));
    std::ostringstream log;

    const EvalReport report = command_crossval(config.string(), {}, log);
    const auto mean_of = [&](const std::string& name) {
        for (const auto& m : report.models) {
            if (m.name == name) {
                return m.mean;
            }
        }
        throw std::runtime_error("model " + name + " missing from report");
    };
    const double gap = mean_of("fwfm-qf") - mean_of("random");
    double p_adj = 1.0;
    for (const auto& c : report.comparisons) {
        if ((c.a == "random" && c.b == "fwfm-qf") || (c.a == "fwfm-qf" && c.b == "random")) {
            p_adj = c.p_adj;
        }
    }
    const bool a_ok = gap >= kGapMin && p_adj < kAlpha;

    std::size_t top_folds = 0;
    std::string ranks;
    for (std::size_t f = 0; f < 10; ++f) {
        char name[64];
        std::snprintf(name, sizeof(name), "correlations.fold%02zu.csv", f);
        std::istringstream csv(read_file(out / name));
        std::string line;
        std::getline(csv, line);
        std::size_t rank = 0;
        std::size_t row = 0;
        while (std::getline(csv, line)) {
            ++row;
            if (line.rfind("pair:country|title,", 0) == 0) {
                rank = row;
            }
        }
        top_folds += rank >= 1 && rank <= kTopRank;
        ranks += (ranks.empty() ? "" : " ") + std::to_string(rank);
    }
    const bool b_ok = top_folds >= kTopFoldsMin;

    const SweepResult sweep = command_select(config.string(), {}, {}, log);
    const double all_mean = fieldrank::mean(sweep.all_test);
    const double selected_mean = fieldrank::mean(sweep.selected_test);
    const bool c_ok = selected_mean >= all_mean - kSelectedSlack;

    std::ostringstream detail;
    detail << "(a) " << (a_ok ? "ok" : "FAIL") << fmt(" gap %.4f p_adj %.3g", gap, p_adj) << "; (b) "
           << (b_ok ? "ok" : "FAIL") << " top-" << kTopRank << " in " << top_folds << "/10 folds, ranks [" << ranks
           << "]; (c) " << (c_ok ? "ok" : "FAIL") << " m=" << sweep.best_m
           << fmt(" selected %.4f vs all %.4f", selected_mean, all_mean) << fmt("; %.0f s", seconds_since(t0));
    return {a_ok && b_ok && c_ok, detail.str()};
}

std::string determinism_config(const fs::path& out)
{
    nlohmann::json j{{"seed", 11},
                     {"synthgen", {{"n_docs", 600}, {"n_sessions", 300}}},
                     {"encoder", {{"bucket_count", 1024}}},
                     {"train", {{"epochs", 3}, {"early_stop_patience", 2}, {"batch_size", 64}}},
                     {"folds", 10},
                     {"models",
                      {{{"name", "random"}, {"family", "random"}},
                       {{"name", "concat"}, {"family", "concat"}, {"d", 8}, {"hidden_widths", {16, 8}}},
                       {{"name", "nrmf-qf"}, {"family", "nrmf"}, {"d", 8}, {"hidden_widths", {16, 8}},
                        {"interactions", "query-field"}},
                       {{"name", "fwfm-all"}, {"family", "fwfm"}, {"d", 8}, {"interactions", "all"}}}},
                     {"out", out.string()}};
    return j.dump(2);
}

Outcome determinism(const fs::path& work)
{
    const fs::path config = work / "det.json";
    write_file(config, determinism_config(work / "det"));
    std::ostringstream log;
    std::vector<std::string> reports;
    for (std::size_t jobs : {1, 1, 8}) {
        Overrides o;
        o.jobs = jobs;
        o.out = (work / ("det-" + std::to_string(reports.size()))).string();
        command_crossval(config.string(), o, log);
        reports.push_back(read_file(fs::path(*o.out) / "report.json"));
    }
    const bool ok = !reports[0].empty() && reports[0] == reports[1] && reports[0] == reports[2];
    return {ok, std::to_string(reports[0].size()) + " bytes; rerun " + (reports[0] == reports[1] ? "same" : "differs") +
                    ", jobs 8 " + (reports[0] == reports[2] ? "same" : "differs")};
}

} // namespace

int main(int argc, char** argv)
{
    fs::path work = fs::temp_directory_path() / ("fieldrank-acceptance-" + std::to_string(::getpid()));
    if (argc > 1) {
        work = argv[1];
    }
    fs::remove_all(work);
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"ndcg matches brute-force oracle", ndcg_oracle},
        {"analytic gradients match finite differences", gradients},
        {"interaction counts", interaction_counts},
        {"last-click truncation", truncation},
        {"random scorer ndcg expectation", random_expectation},
        {"t-test and bonferroni oracle", statistics},
        {"planted signal recovery end to end", [&] { return signal_recovery(work); }},
        {"report.json determinism across reruns and jobs", [&] { return determinism(work); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.detail
                  << std::endl;
    }
    if (argc <= 1) {
        std::error_code ec;
        fs::remove_all(work, ec);
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
