#pragma once

// Private helpers shared by the serializers. Not installed.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "tabkd/error.hpp"
#include "tabkd/nn.hpp"

namespace tabkd::detail {

using json = nlohmann::json;

inline json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(1) << '\n';
}

inline json tensor_to_json(const Tensor& t) {
    return json{{"shape", t.shape()}, {"data", std::vector<double>(t.values().begin(), t.values().end())}};
}

inline Tensor tensor_from_json(const json& j) {
    return Tensor::from(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

inline json mlp_to_json(const Mlp& mlp) {
    json layers = json::array();
    for (const auto& l : mlp.layers()) {
        layers.push_back({{"weight", tensor_to_json(l.weight)}, {"bias", tensor_to_json(l.bias)}});
    }
    return json{{"dropout", mlp.dropout()}, {"layers", layers}};
}

inline Mlp mlp_from_json(const json& j) {
    std::vector<Linear> layers;
    for (const auto& lj : j.at("layers")) {
        Linear l;
        l.weight = tensor_from_json(lj.at("weight"));
        l.bias = tensor_from_json(lj.at("bias"));
        if (l.bias.numel() != l.weight.cols()) throw DataError("layer bias does not match weight columns");
        layers.push_back(std::move(l));
    }
    for (std::size_t i = 1; i < layers.size(); ++i) {
        if (layers[i].in_features() != layers[i - 1].out_features()) throw DataError("layer sizes do not chain");
    }
    return Mlp(std::move(layers), j.value("dropout", 0.0));
}

}  // namespace tabkd::detail
