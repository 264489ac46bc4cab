#include "neurodiff/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "neurodiff/error.hpp"
#include "neurodiff/rng.hpp"

namespace neurodiff {

std::string_view to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::TestInternal: return "test-internal";
        case Split::TestExternal: return "test-external";
    }
    return "train";
}

Split parse_split(std::string_view text) {
    if (text == "train") return Split::Train;
    if (text == "test-internal") return Split::TestInternal;
    if (text == "test-external") return Split::TestExternal;
    throw Error(Errc::parse_error, "unknown split '" + std::string(text) + "'");
}

Manifest parse_manifest(std::istream& is) {
    Manifest out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            ManifestRecord r;
            r.subject = j.at("subject").get<std::string>();
            r.path = j.at("path").get<std::string>();
            r.dataset = j.at("dataset").get<std::string>();
            if (j.contains("split") && !j["split"].is_null()) {
                r.split = parse_split(j["split"].get<std::string>());
            }
            const std::string qa = j.value("qa_status", "pass");
            if (qa != "pass" && qa != "fail") {
                throw Error(Errc::parse_error, "qa_status must be pass or fail");
            }
            r.qa_pass = qa == "pass";
            if (j.contains("qa_reason") && !j["qa_reason"].is_null()) {
                r.qa_reason = j["qa_reason"].get<std::string>();
            }
            if (j.contains("mask_path") && !j["mask_path"].is_null()) {
                r.mask_path = j["mask_path"].get<std::string>();
            }
            out.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::parse_error, "manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw Error(Errc::io_error, "cannot open manifest " + path.string());
    }
    return parse_manifest(is);
}

void write_manifest(std::ostream& os, const Manifest& manifest) {
    for (const ManifestRecord& r : manifest) {
        nlohmann::json j;
        j["subject"] = r.subject;
        j["path"] = r.path;
        j["dataset"] = r.dataset;
        j["split"] = r.split ? nlohmann::json(std::string(to_string(*r.split))) : nlohmann::json();
        j["qa_status"] = r.qa_pass ? "pass" : "fail";
        if (r.qa_reason) j["qa_reason"] = *r.qa_reason;
        if (r.mask_path) j["mask_path"] = *r.mask_path;
        os << j.dump() << '\n';
    }
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    std::ofstream os(path);
    if (!os) {
        throw Error(Errc::io_error, "cannot write " + path.string());
    }
    write_manifest(os, manifest);
}

void write_manifest_csv(std::ostream& os, const Manifest& manifest) {
    auto quote = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string out = "\"";
        for (char c : s) {
            if (c == '"') out += '"';
            out += c;
        }
        return out + "\"";
    };
    os << "subject,path,dataset,split,qa_status,qa_reason,mask_path\n";
    for (const ManifestRecord& r : manifest) {
        os << quote(r.subject) << ',' << quote(r.path) << ',' << quote(r.dataset) << ','
           << (r.split ? to_string(*r.split) : "") << ',' << (r.qa_pass ? "pass" : "fail") << ','
           << quote(r.qa_reason.value_or("")) << ',' << quote(r.mask_path.value_or("")) << '\n';
    }
}

Manifest split_subjects(const Manifest& manifest, const SplitOptions& options) {
    if (options.test_fraction < 0.0 || options.test_fraction > 1.0) {
        throw Error(Errc::invalid_parameter, "test fraction must lie in [0, 1]");
    }
    // dataset -> ordered unique subjects
    std::map<std::string, std::vector<std::string>> subjects;
    for (const ManifestRecord& r : manifest) {
        auto& list = subjects[r.dataset];
        if (std::find(list.begin(), list.end(), r.subject) == list.end()) {
            list.push_back(r.subject);
        }
    }

    std::map<std::pair<std::string, std::string>, Split> assignment;
    std::uint64_t dataset_index = 0;
    for (auto& [dataset, list] : subjects) {
        std::sort(list.begin(), list.end());
        if (options.withheld_datasets.count(dataset) != 0) {
            for (const auto& s : list) assignment[{dataset, s}] = Split::TestExternal;
            ++dataset_index;
            continue;
        }
        Rng rng(options.seed, dataset_index++);
        for (std::size_t i = list.size(); i > 1; --i) {
            std::swap(list[i - 1], list[rng.below(i)]);
        }
        const auto n_test = static_cast<std::size_t>(
            std::llround(options.test_fraction * static_cast<double>(list.size())));
        for (std::size_t i = 0; i < list.size(); ++i) {
            assignment[{dataset, list[i]}] = i < n_test ? Split::TestInternal : Split::Train;
        }
    }

    Manifest out;
    for (const ManifestRecord& r : manifest) {
        if (!r.qa_pass) continue;
        ManifestRecord copy = r;
        copy.split = assignment.at({r.dataset, r.subject});
        out.push_back(std::move(copy));
    }
    return out;
}

}  // namespace neurodiff
