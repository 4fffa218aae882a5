// SPDX-License-Identifier: Apache-2.0

#include "fieldrank/fieldrank.h"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace {

void print_line(const char* line, void*) { std::cout << line << '\n' << std::flush; }

struct CommonFlags {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t jobs = 0;
    std::size_t folds = 0;
    std::size_t k = 0;
    double alpha = 0.0;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* alpha_opt = nullptr;

    void attach(CLI::App* cmd, bool experiment)
    {
        cmd->add_option("--config", config, "JSON config file")->required()->check(CLI::ExistingFile);
        cmd->add_option("--out", out, "output directory (overrides the config)");
        seed_opt = cmd->add_option("--seed", seed, "global seed (overrides the config)");
        if (experiment) {
            cmd->add_option("--jobs", jobs, "parallel fold workers")->check(CLI::PositiveNumber);
            cmd->add_option("--folds", folds, "cross-validation folds (default 10)")->check(CLI::Range(2, 1000000));
            cmd->add_option("--k", k, "NDCG cutoff (default 20)")->check(CLI::PositiveNumber);
            alpha_opt = cmd->add_option("--alpha", alpha, "significance level (default 0.01)");
        }
    }

    fr_options options() const
    {
        fr_options o;
        fr_options_init(&o);
        o.out = out.empty() ? nullptr : out.c_str();
        o.has_seed = seed_opt && seed_opt->count() > 0;
        o.seed = seed;
        o.jobs = jobs;
        o.folds = folds;
        o.k = k;
        o.has_alpha = alpha_opt && alpha_opt->count() > 0;
        o.alpha = alpha;
        o.log = print_line;
        return o;
    }
};

int finish(fr_status status)
{
    if (status != FR_OK) {
        std::cerr << "error: " << fr_last_error() << '\n';
    }
    return static_cast<int>(status);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Field-aware learning-to-rank experiments"};
    app.set_version_flag("--version", std::string(fr_version()));
    app.require_subcommand(1);

    CommonFlags gen_flags;
    auto* gen = app.add_subcommand("generate", "write a synthetic catalog.jsonl and log.jsonl");
    gen_flags.attach(gen, false);

    CommonFlags cv_flags;
    auto* cv = app.add_subcommand("crossval", "cross-validate the configured models");
    cv_flags.attach(cv, true);

    CommonFlags sel_flags;
    std::vector<std::size_t> ms;
    auto* sel = app.add_subcommand("select", "correlation-driven interaction selection");
    sel_flags.attach(sel, true);
    sel->add_option("--m", ms, "subset sizes to sweep, e.g. 3,5,10")->delimiter(',');

    bool corrupt = false;
    auto* gc = app.add_subcommand("gradcheck", "compare analytic and numeric gradients");
    gc->add_flag("--corrupt-gradient", corrupt, "perturb one gradient entry (negative control)")->group("");

    std::string report_path;
    std::string report_out;
    auto* rep = app.add_subcommand("report", "print the tables of an existing report.json");
    rep->add_option("report", report_path, "path to report.json");
    rep->add_option("--out", report_out, "directory holding report.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (gen->parsed()) {
        const fr_options o = gen_flags.options();
        return finish(fr_cmd_generate(gen_flags.config.c_str(), &o));
    }
    if (cv->parsed()) {
        const fr_options o = cv_flags.options();
        return finish(fr_cmd_crossval(cv_flags.config.c_str(), &o));
    }
    if (sel->parsed()) {
        const fr_options o = sel_flags.options();
        return finish(fr_cmd_select(sel_flags.config.c_str(), ms.data(), ms.size(), &o));
    }
    if (gc->parsed()) {
        fr_options o;
        fr_options_init(&o);
        o.log = print_line;
        int passed = 0;
        const fr_status s = fr_cmd_gradcheck(corrupt ? 1 : 0, &o, &passed);
        if (s != FR_OK) {
            return finish(s);
        }
        if (!passed) {
            std::cerr << "gradient check failed: relative error at or above 1e-4\n";
            return 1;
        }
        return 0;
    }
    if (rep->parsed()) {
        if (report_path.empty()) {
            if (report_out.empty()) {
                std::cerr << "error: give a report path or --out\n";
                return 2;
            }
            report_path = report_out + "/report.json";
        }
        char* text = nullptr;
        const fr_status s = fr_cmd_report(report_path.c_str(), &text);
        if (s == FR_OK) {
            std::cout << text;
            fr_string_free(text);
        }
        return finish(s);
    }
    return 2;
}
