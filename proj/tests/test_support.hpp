#pragma once

#include "lexprompt/corpus.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

namespace testsupport {

// Unique scratch directory per test, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("lexprompt_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::filesystem::path path() const { return path_; }
    std::string str(const std::string& name = "") const {
        return name.empty() ? path_.string() : (path_ / name).string();
    }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline lexprompt::CaseDocument make_doc(std::string id, lexprompt::Label label,
                                        std::string text = "The applicant complained.",
                                        lexprompt::Language lang = lexprompt::Language::en,
                                        lexprompt::Split split = lexprompt::Split::test) {
    lexprompt::CaseDocument doc;
    doc.id = std::move(id);
    doc.language = lang;
    doc.text = std::move(text);
    doc.gold_label = label;
    doc.split = split;
    return doc;
}

// n_pos positive then n_neg negative single-line documents.
inline std::vector<lexprompt::CaseDocument> synthetic_docs(std::size_t n_pos, std::size_t n_neg,
                                                           lexprompt::Split split,
                                                           lexprompt::Language lang =
                                                               lexprompt::Language::en) {
    std::vector<lexprompt::CaseDocument> docs;
    docs.reserve(n_pos + n_neg);
    for (std::size_t i = 0; i < n_pos + n_neg; ++i) {
        auto doc = make_doc("doc" + std::to_string(i),
                            i < n_pos ? lexprompt::Label::positive : lexprompt::Label::negative,
                            "Case facts " + std::to_string(i) + ".", lang, split);
        docs.push_back(std::move(doc));
    }
    return docs;
}

} // namespace testsupport
