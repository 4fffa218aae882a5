// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fieldrank/domain.hpp"
#include "fieldrank/rng.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fieldrank::test {

inline Document make_doc(const std::string& id, TextList title, std::string country = "jp",
                         std::vector<double> image = {})
{
    Document d;
    d.doc_id = id;
    d.fields[FieldId::Title] = std::move(title);
    d.fields[FieldId::Ingredients] = TextList{"salt", "water"};
    d.fields[FieldId::Description] = TextList{"simple", "dish"};
    d.fields[FieldId::Country] = Category{std::move(country)};
    if (!image.empty()) {
        d.fields[FieldId::Image] = DenseVector{std::move(image)};
    }
    return d;
}

inline Session make_session(const std::string& id, std::vector<std::string> candidates,
                            std::vector<std::size_t> clicks, TextList query = {"pizza"})
{
    Session s;
    s.session_id = id;
    s.query = std::move(query);
    s.candidates = std::move(candidates);
    s.clicked_positions = std::move(clicks);
    return s;
}

/// Catalog of `n` documents named d0..d{n-1} with varied content.
inline Dataset small_dataset(std::size_t n_docs = 12)
{
    Dataset ds;
    const std::vector<std::string> words{"pizza", "pasta", "curry", "rice", "soup", "cake", "bread", "salad"};
    const std::vector<std::string> countries{"jp", "it", "in", "fr"};
    for (std::size_t i = 0; i < n_docs; ++i) {
        const std::string id = "d" + std::to_string(i);
        ds.catalog[id] = make_doc(id, {words[i % words.size()], words[(i * 3 + 1) % words.size()]},
                                  countries[i % countries.size()],
                                  {0.1 * static_cast<double>(i), -0.2, 0.3 * static_cast<double>(i % 3)});
    }
    return ds;
}

/// Appends random sessions over the catalog's documents; every session ends at a click.
inline void add_random_sessions(Dataset& ds, std::size_t n, std::uint64_t seed, std::size_t max_len = 6)
{
    Rng rng(seed);
    std::vector<std::string> ids;
    for (const auto& [id, _] : ds.catalog) {
        ids.push_back(id);
    }
    const std::vector<std::string> words{"pizza", "pasta", "curry", "rice", "soup", "cake", "bread", "salad"};
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<std::string> pool = ids;
        rng.shuffle(pool);
        const std::size_t len = 2 + rng.below(max_len - 1);
        pool.resize(std::min(len, pool.size()));
        std::vector<std::size_t> clicks;
        for (std::size_t i = 0; i + 1 < pool.size(); ++i) {
            if (rng.bernoulli(0.25)) {
                clicks.push_back(i);
            }
        }
        clicks.push_back(pool.size() - 1);
        ds.sessions.push_back(
            make_session("s" + std::to_string(ds.sessions.size()), pool, clicks, {words[rng.below(words.size())]}));
    }
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("fieldrank-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace fieldrank::test
