#include "finepseudo/dataset.hpp"

#include "finepseudo/seqcore.hpp"

#include <json.hpp>

#include <fstream>

namespace fp {

std::string to_string(Split s) {
    switch (s) {
        case Split::Labeled: return "labeled";
        case Split::Unlabeled: return "unlabeled";
        case Split::Test: return "test";
    }
    return "unlabeled";
}

Split parse_split(const std::string& s) {
    if (s == "labeled") return Split::Labeled;
    if (s == "unlabeled") return Split::Unlabeled;
    if (s == "test") return Split::Test;
    throw FormatError("unknown split '" + s + "'", 0);
}

std::vector<const SyntheticVideo*> Dataset::split(Split s) const {
    std::vector<const SyntheticVideo*> out;
    for (const auto& v : samples)
        if (v.split == s) out.push_back(&v);
    return out;
}

void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json index;
    index["feature_dim"] = data.feature_dim;
    index["num_classes"] = data.num_classes;
    index["samples"] = nlohmann::json::array();
    for (const auto& v : data.samples) {
        const std::string file = v.id + ".fpsq";
        save_sequence(FrameSequence(v.signal), dir / file);
        index["samples"].push_back({{"id", v.id},
                                    {"file", file},
                                    {"class", v.label},
                                    {"split", to_string(v.split)},
                                    {"novel", v.novel},
                                    {"phases", v.phases},
                                    {"progress", v.progress}});
    }
    std::ofstream out(dir / "index.json", std::ios::trunc);
    if (!out) throw Error("io", "cannot write " + (dir / "index.json").string());
    out << index.dump(1) << '\n';
}

Dataset read_dataset(const std::filesystem::path& dir) {
    const auto index_path = dir / "index.json";
    std::ifstream in(index_path);
    if (!in) throw Error("io", "cannot open " + index_path.string());
    nlohmann::json index;
    try {
        index = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed index.json: ") + e.what(), 0);
    }
    Dataset data;
    try {
        data.feature_dim = index.at("feature_dim").get<Index>();
        data.num_classes = index.at("num_classes").get<int>();
        for (const auto& s : index.at("samples")) {
            SyntheticVideo v;
            v.id = s.at("id").get<std::string>();
            v.label = s.at("class").get<int>();
            v.split = parse_split(s.at("split").get<std::string>());
            v.novel = s.at("novel").get<bool>();
            v.phases = s.at("phases").get<std::vector<int>>();
            v.progress = s.at("progress").get<std::vector<double>>();
            v.signal = load_sequence(dir / s.at("file").get<std::string>()).frames();
            if (v.signal.cols() != data.feature_dim)
                throw FormatError("sample '" + v.id + "' has feature dim " + std::to_string(v.signal.cols()), 12);
            data.samples.push_back(std::move(v));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("index.json schema error: ") + e.what(), 0);
    }
    return data;
}

}  // namespace fp
