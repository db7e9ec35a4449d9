#pragma once

// JSON model files. Matrices are nested row-major arrays; numbers use the
// shortest decimal form that reads back to the same double, so
// save -> load -> save reproduces the file byte for byte.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "rfvm/data.hpp"
#include "rfvm/error.hpp"
#include "rfvm/model.hpp"

namespace rfvm {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

using nlohmann::json;

inline json vec_to_json(const VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json mat_to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(vec_to_json(m.row(i).transpose()));
  return rows;
}

inline VectorXd vec_from_json(const json& j) {
  VectorXd v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = j.at(i).get<double>();
  return v;
}

inline MatrixXd mat_from_json(const json& j, Index cols) {
  MatrixXd m(static_cast<Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& row = j.at(i);
    if (static_cast<Index>(row.size()) != cols) throw ModelFormatError("ragged matrix in model file");
    for (Index c = 0; c < cols; ++c) m(static_cast<Index>(i), c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

inline json hyperparams_to_json(const Hyperparams& hp) {
  json order = json::array();
  for (Factor f : hp.update_order) order.push_back(factor_name(f));
  return {{"alpha0_psi", hp.alpha0_psi},
          {"beta0_psi", hp.beta0_psi},
          {"alpha0_delta", hp.alpha0_delta},
          {"beta0_delta", hp.beta0_delta},
          {"alpha0_tau", hp.alpha0_tau},
          {"beta0_tau", hp.beta0_tau},
          {"prune_threshold_v", hp.prune_threshold_v},
          {"prune_threshold_a", hp.prune_threshold_a},
          {"conv_window", hp.conv_window},
          {"conv_rel_tol", hp.conv_rel_tol},
          {"max_iters", hp.max_iters},
          {"prune_warmup_iters", hp.prune_warmup_iters},
          {"pruning", hp.pruning},
          {"seed", hp.seed},
          {"update_order", order},
          {"v_update", v_rule_name(hp.v_rule)}};
}

inline Hyperparams hyperparams_from_json(const json& j) {
  Hyperparams hp;
  hp.alpha0_psi = j.at("alpha0_psi").get<double>();
  hp.beta0_psi = j.at("beta0_psi").get<double>();
  hp.alpha0_delta = j.at("alpha0_delta").get<double>();
  hp.beta0_delta = j.at("beta0_delta").get<double>();
  hp.alpha0_tau = j.at("alpha0_tau").get<double>();
  hp.beta0_tau = j.at("beta0_tau").get<double>();
  hp.prune_threshold_v = j.at("prune_threshold_v").get<double>();
  hp.prune_threshold_a = j.at("prune_threshold_a").get<double>();
  hp.conv_window = j.at("conv_window").get<int>();
  hp.conv_rel_tol = j.at("conv_rel_tol").get<double>();
  hp.max_iters = j.at("max_iters").get<int>();
  hp.prune_warmup_iters = j.at("prune_warmup_iters").get<int>();
  hp.pruning = j.at("pruning").get<bool>();
  hp.seed = j.at("seed").get<std::uint64_t>();
  hp.update_order.clear();
  for (const auto& name : j.at("update_order")) hp.update_order.push_back(parse_factor(name.get<std::string>()));
  hp.v_rule = parse_v_rule(j.at("v_update").get<std::string>());
  return hp;
}

}  // namespace detail

inline std::string model_to_json(const FittedModel& m) {
  using detail::json;
  json constant = json::array();
  for (bool c : m.standardizer.constant) constant.push_back(c);
  json j = {
      {"format_version", kModelFormatVersion},
      {"n_features", m.n_features_total},
      {"feature_names", m.feature_names},
      {"hyperparams", detail::hyperparams_to_json(m.hp)},
      {"standardizer",
       {{"means", detail::vec_to_json(m.standardizer.means)},
        {"stds", detail::vec_to_json(m.standardizer.stds)},
        {"constant", constant}}},
      {"active_features", m.feature_index},
      {"active_rvs", m.rv_index},
      {"v",
       {{"folded_mean", detail::vec_to_json(m.v_mean)},
        {"folded_var", detail::vec_to_json(m.v_var)},
        {"mu", detail::vec_to_json(m.v_mu)},
        {"prec", detail::vec_to_json(m.v_prec)}}},
      {"a", {{"mean", detail::vec_to_json(m.a_mean)}, {"cov", detail::mat_to_json(m.a_cov)}}},
      {"relevance_vectors", detail::mat_to_json(m.X_tilde)},
      {"b", {{"mean", m.b_mean}, {"var", m.b_var}}},
      {"tau", {{"alpha", m.tau.alpha}, {"beta", m.tau.beta}, {"mean", m.tau_mean()}}},
      {"provenance",
       {{"seed", m.hp.seed}, {"iterations", m.iterations}, {"converged", m.converged}, {"final_elbo", m.final_elbo}}},
  };
  return j.dump(1) + "\n";
}

inline FittedModel model_from_json(const std::string& text) {
  using detail::json;
  FittedModel m;
  try {
    const json j = json::parse(text);
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw ModelFormatError("unsupported model format_version " + std::to_string(version) + " (expected " +
                             std::to_string(kModelFormatVersion) + ")");
    }
    m.n_features_total = j.at("n_features").get<Index>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.hp = detail::hyperparams_from_json(j.at("hyperparams"));
    const json& st = j.at("standardizer");
    m.standardizer.means = detail::vec_from_json(st.at("means"));
    m.standardizer.stds = detail::vec_from_json(st.at("stds"));
    m.standardizer.constant = st.at("constant").get<std::vector<bool>>();
    m.feature_index = j.at("active_features").get<std::vector<Index>>();
    m.rv_index = j.at("active_rvs").get<std::vector<Index>>();
    const json& v = j.at("v");
    m.v_mean = detail::vec_from_json(v.at("folded_mean"));
    m.v_var = detail::vec_from_json(v.at("folded_var"));
    m.v_mu = detail::vec_from_json(v.at("mu"));
    m.v_prec = detail::vec_from_json(v.at("prec"));
    const json& a = j.at("a");
    m.a_mean = detail::vec_from_json(a.at("mean"));
    m.a_cov = detail::mat_from_json(a.at("cov"), m.a_mean.size());
    m.X_tilde = detail::mat_from_json(j.at("relevance_vectors"), m.v_mean.size());
    m.b_mean = j.at("b").at("mean").get<double>();
    m.b_var = j.at("b").at("var").get<double>();
    m.tau = {j.at("tau").at("alpha").get<double>(), j.at("tau").at("beta").get<double>()};
    const json& pv = j.at("provenance");
    m.iterations = pv.at("iterations").get<long>();
    m.converged = pv.at("converged").get<bool>();
    m.final_elbo = pv.at("final_elbo").get<double>();
  } catch (const json::exception& e) {
    throw ModelFormatError(std::string("malformed model file: ") + e.what());
  } catch (const InvalidParameter& e) {
    throw ModelFormatError(std::string("malformed model file: ") + e.what());
  }
  m.check();
  m.refresh();
  return m;
}

inline void save_model(const FittedModel& m, const std::filesystem::path& path) {
  write_file_atomic(path, model_to_json(m));
}

inline FittedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace rfvm
