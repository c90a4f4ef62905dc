#include "ramp/model_io.hpp"

#include "json.hpp"

namespace ramp {

using nlohmann::json;

namespace {

json tree_json(const RegressionTree& t) {
    json nodes = json::array();
    for (const TreeNode& n : t.nodes())
        nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value, n.weight});
    return {{"max_depth", t.params().max_depth}, {"min_leaf_weight", t.params().min_leaf_weight}, {"nodes", nodes}};
}

RegressionTree tree_from(const json& j) {
    TreeParams p{j.at("max_depth").get<int>(), j.at("min_leaf_weight").get<double>()};
    std::vector<TreeNode> nodes;
    for (const json& n : j.at("nodes")) {
        if (!n.is_array() || n.size() != 6) throw Error(ErrorKind::MalformedInput, "model: bad tree node");
        TreeNode t;
        t.feature = n[0].get<int>();
        t.threshold = n[1].get<double>();
        t.left = n[2].get<int>();
        t.right = n[3].get<int>();
        t.value = n[4].get<double>();
        t.weight = n[5].get<double>();
        nodes.push_back(t);
    }
    const auto count = static_cast<int>(nodes.size());
    for (const TreeNode& t : nodes)
        if (t.feature >= 0 && (t.left <= 0 || t.left >= count || t.right <= 0 || t.right >= count))
            throw Error(ErrorKind::MalformedInput, "model: tree child index out of range");
    if (nodes.empty()) throw Error(ErrorKind::MalformedInput, "model: empty tree");
    return RegressionTree(std::move(nodes), p);
}

json ensemble_json(const R2Ensemble& e) {
    json trees = json::array();
    for (const RegressionTree& t : e.trees) trees.push_back(tree_json(t));
    return {{"betas", e.betas}, {"trees", trees}};
}

R2Ensemble ensemble_from(const json& j) {
    R2Ensemble e;
    e.betas = j.at("betas").get<std::vector<double>>();
    for (const json& t : j.at("trees")) e.trees.push_back(tree_from(t));
    if (e.trees.size() != e.betas.size() || e.trees.empty())
        throw Error(ErrorKind::MalformedInput, "model: trees and betas differ in count");
    return e;
}

json parse_versioned(const std::string& text, const char* kind) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::MalformedInput, std::string("model: ") + ex.what());
    }
    if (!j.is_object() || j.value("kind", "") != kind)
        throw Error(ErrorKind::MalformedInput, std::string("model: expected a ") + kind + " document");
    if (j.value("format_version", 0) != kModelFormatVersion)
        throw Error(ErrorKind::InvalidConfig, "model: unsupported format_version");
    return j;
}

template <class F>
auto guarded(F f) {
    try {
        return f();
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::MalformedInput, std::string("model: ") + ex.what());
    }
}

}  // namespace

std::string ensemble_to_json(const R2Ensemble& e) {
    json j = ensemble_json(e);
    j["kind"] = "r2_ensemble";
    j["format_version"] = kModelFormatVersion;
    return j.dump();
}

R2Ensemble ensemble_from_json(const std::string& text) {
    json j = parse_versioned(text, "r2_ensemble");
    return guarded([&] { return ensemble_from(j); });
}

std::string transfer_model_to_json(const TransferModel& m, const std::string& target) {
    const TransferConfig& c = m.config;
    json cfg = {{"steps", c.steps},
                {"folds", c.folds},
                {"theta", c.theta},
                {"comparator", std::string(to_string(c.comparator))},
                {"n_estimators", c.n_estimators},
                {"max_depth", c.max_depth},
                {"cv_exclude_twins", c.cv_exclude_twins},
                {"substitute_all_inputs", c.substitute_all_inputs},
                {"seed", c.seed}};
    if (c.min_leaf_weight) cfg["min_leaf_weight"] = *c.min_leaf_weight;
    std::vector<int> zero_variance(m.transform.zero_variance.begin(), m.transform.zero_variance.end());
    json j = {{"kind", "transfer_model"},
              {"format_version", kModelFormatVersion},
              {"target", target},
              {"columns", m.columns},
              {"standardization",
               {{"means", m.transform.means},
                {"scales", m.transform.scales},
                {"zero_variance", zero_variance},
                {"target_mean", m.transform.target_mean}}},
              {"selected_step", m.selected_step},
              {"step_errors", m.step_errors},
              {"substitute_mass", m.substitute_mass},
              {"source_rows", m.source_rows},
              {"substitute_rows", m.substitute_rows},
              {"config", cfg},
              {"ensemble", ensemble_json(m.ensemble)}};
    return j.dump();
}

TransferModel transfer_model_from_json(const std::string& text, std::string* target) {
    json j = parse_versioned(text, "transfer_model");
    return guarded([&] {
        TransferModel m;
        if (target) *target = j.value("target", "");
        m.columns = j.at("columns").get<std::vector<std::string>>();
        const json& s = j.at("standardization");
        m.transform.columns = m.columns;
        m.transform.means = s.at("means").get<std::vector<double>>();
        m.transform.scales = s.at("scales").get<std::vector<double>>();
        for (int z : s.at("zero_variance").get<std::vector<int>>()) m.transform.zero_variance.push_back(z != 0);
        m.transform.target_mean = s.at("target_mean").get<double>();
        const std::size_t p = m.columns.size();
        if (m.transform.means.size() != p || m.transform.scales.size() != p || m.transform.zero_variance.size() != p)
            throw Error(ErrorKind::MalformedInput, "model: standardization length differs from the roster");
        m.selected_step = j.at("selected_step").get<int>();
        m.step_errors = j.at("step_errors").get<std::vector<double>>();
        m.substitute_mass = j.at("substitute_mass").get<std::vector<double>>();
        m.source_rows = j.at("source_rows").get<std::size_t>();
        m.substitute_rows = j.at("substitute_rows").get<std::size_t>();
        const json& c = j.at("config");
        m.config.steps = c.at("steps").get<int>();
        m.config.folds = c.at("folds").get<int>();
        m.config.theta = c.at("theta").get<double>();
        auto cmp = parse_comparator(c.at("comparator").get<std::string>());
        if (!cmp) throw Error(ErrorKind::MalformedInput, "model: unknown comparator");
        m.config.comparator = *cmp;
        m.config.n_estimators = c.at("n_estimators").get<int>();
        m.config.max_depth = c.at("max_depth").get<int>();
        m.config.cv_exclude_twins = c.at("cv_exclude_twins").get<bool>();
        m.config.substitute_all_inputs = c.value("substitute_all_inputs", true);
        m.config.seed = c.at("seed").get<std::uint64_t>();
        if (c.contains("min_leaf_weight")) m.config.min_leaf_weight = c.at("min_leaf_weight").get<double>();
        m.ensemble = ensemble_from(j.at("ensemble"));
        return m;
    });
}

}  // namespace ramp
