#pragma once

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "hmjls/model.hpp"

namespace hmjls {

using nlohmann::json;

/// Contents of a model file: the plant plus optional channel and initial
/// data. Field names are documented in the README.
struct ModelFile {
  std::string name;
  MjlsModel model;
  std::optional<ObservationProcess> observation;
  std::optional<InitialData> initial;
};

namespace io_detail {

inline json matrix_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw std::invalid_argument(what + ": expected an array of rows");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols)
      throw std::invalid_argument(what + ": ragged rows");
    for (Eigen::Index jj = 0; jj < cols; ++jj) M(i, jj) = j[i][jj].get<double>();
  }
  return M;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw std::invalid_argument(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

/// Rows with |sum - 1| <= kStochasticTol are renormalized exactly; rows that
/// are already stochastic to within a few ulps are left untouched so that
/// load -> save -> load is bit-stable.
inline void settle_rows(Eigen::MatrixXd& M) {
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    const double sum = M.row(i).sum();
    if (std::abs(sum - 1.0) > 1e-14) M.row(i) /= sum;
  }
}

inline void settle_distribution(Eigen::VectorXd& v) {
  const double sum = v.sum();
  if (std::abs(sum - 1.0) > 1e-14) v /= sum;
}

}  // namespace io_detail

inline json observation_to_json(const ObservationProcess& obs) {
  json j;
  j["M"] = obs.M;
  j["Q"] = io_detail::matrix_to_json(obs.Q);
  j["f"] = obs.f;
  return j;
}

/// Accepts either a preset ({"preset": "gilbert_elliott"|"iid"|"periodic",
/// ...params}) or an explicit {"M", "Q", "f"} object.
inline ObservationProcess observation_from_json(const json& j) {
  ObservationProcess obs;
  if (j.contains("preset")) {
    const std::string preset = j.at("preset").get<std::string>();
    if (preset == "gilbert_elliott" || preset == "ge")
      obs = gilbert_elliott(j.at("p").get<double>(), j.at("q").get<double>());
    else if (preset == "iid")
      obs = iid_failures(j.at("pf").get<double>());
    else if (preset == "periodic")
      obs = periodic_with_failures(j.at("l").get<int>(), j.at("p").get<double>());
    else
      throw std::invalid_argument("unknown observation preset: " + preset);
  } else {
    obs.M = j.at("M").get<int>();
    obs.Q = io_detail::matrix_from_json(j.at("Q"), "Q");
    obs.f = j.at("f").get<std::vector<int>>();
  }
  ValidationReport rep = validate_observation(obs);
  if (!rep.ok()) throw std::invalid_argument("invalid observation process:\n" + rep.str());
  io_detail::settle_rows(obs.Q);
  return obs;
}

inline json model_file_to_json(const ModelFile& mf) {
  json j;
  if (!mf.name.empty()) j["name"] = mf.name;
  j["dims"] = {{"N", mf.model.N}, {"n", mf.model.n}, {"m", mf.model.m},
               {"l", mf.model.l}, {"q", mf.model.q}};
  auto fam = [](const std::vector<Eigen::MatrixXd>& v) {
    json a = json::array();
    for (const auto& M : v) a.push_back(io_detail::matrix_to_json(M));
    return a;
  };
  j["A"] = fam(mf.model.A);
  j["B"] = fam(mf.model.B);
  j["C"] = fam(mf.model.C);
  j["D"] = fam(mf.model.D);
  j["E"] = fam(mf.model.E);
  j["P"] = io_detail::matrix_to_json(mf.model.P);
  if (mf.observation) j["observation"] = observation_to_json(*mf.observation);
  if (mf.initial) {
    json init;
    init["mu_r"] = io_detail::vector_to_json(mf.initial->mu_r);
    init["mu_s"] = io_detail::vector_to_json(mf.initial->mu_s);
    init["nu"] = io_detail::matrix_to_json(mf.initial->nu);
    j["initial"] = init;
  }
  return j;
}

inline ModelFile model_file_from_json(const json& j) {
  ModelFile mf;
  if (j.contains("name")) mf.name = j.at("name").get<std::string>();
  const json& dims = j.at("dims");
  mf.model.N = dims.at("N").get<int>();
  mf.model.n = dims.at("n").get<int>();
  mf.model.m = dims.at("m").get<int>();
  mf.model.l = dims.at("l").get<int>();
  mf.model.q = dims.at("q").get<int>();
  auto fam = [&](const char* key) {
    std::vector<Eigen::MatrixXd> v;
    for (const auto& jm : j.at(key)) v.push_back(io_detail::matrix_from_json(jm, key));
    return v;
  };
  mf.model.A = fam("A");
  mf.model.B = fam("B");
  mf.model.C = fam("C");
  mf.model.D = fam("D");
  mf.model.E = fam("E");
  mf.model.P = io_detail::matrix_from_json(j.at("P"), "P");
  ValidationReport rep = validate_model(mf.model);
  if (!rep.ok()) throw std::invalid_argument("invalid model:\n" + rep.str());
  io_detail::settle_rows(mf.model.P);

  if (j.contains("observation")) mf.observation = observation_from_json(j.at("observation"));
  if (j.contains("initial")) {
    const json& init = j.at("initial");
    InitialData id;
    id.mu_r = io_detail::vector_from_json(init.at("mu_r"), "mu_r");
    id.mu_s = io_detail::vector_from_json(init.at("mu_s"), "mu_s");
    id.nu = io_detail::matrix_from_json(init.at("nu"), "nu");
    const int M = mf.observation ? mf.observation->M : static_cast<int>(id.mu_s.size());
    ValidationReport irep =
        validate_initial(id, mf.model.N, M, static_cast<int>(id.nu.cols()));
    if (!irep.ok()) throw std::invalid_argument("invalid initial data:\n" + irep.str());
    io_detail::settle_distribution(id.mu_r);
    io_detail::settle_distribution(id.mu_s);
    {
      const double sum = id.nu.sum();
      if (std::abs(sum - 1.0) > 1e-14) id.nu /= sum;
    }
    mf.initial = id;
  }
  return mf;
}

inline ModelFile load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open model file: " + path);
  json j;
  in >> j;
  return model_file_from_json(j);
}

inline void save_model_file(const ModelFile& mf, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write model file: " + path);
  out << model_file_to_json(mf).dump(2) << '\n';
}

inline json gains_to_json(const FeedbackGains& g) {
  json j;
  j["N"] = g.N;
  j["T"] = g.T;
  json bank = json::array();
  for (int gi = 0; gi < g.N; ++gi) {
    json row = json::array();
    for (int d = 0; d < g.T; ++d) row.push_back(io_detail::matrix_to_json(g.K[gi][d]));
    bank.push_back(std::move(row));
  }
  j["K"] = bank;
  return j;
}

inline FeedbackGains gains_from_json(const json& j) {
  FeedbackGains g;
  g.N = j.at("N").get<int>();
  g.T = j.at("T").get<int>();
  g.K.resize(g.N);
  const json& bank = j.at("K");
  if (static_cast<int>(bank.size()) != g.N)
    throw std::invalid_argument("gain bank has wrong number of rows");
  for (int gi = 0; gi < g.N; ++gi) {
    if (static_cast<int>(bank[gi].size()) != g.T)
      throw std::invalid_argument("gain bank row has wrong number of phases");
    for (int d = 0; d < g.T; ++d)
      g.K[gi].push_back(io_detail::matrix_from_json(bank[gi][d], "K"));
  }
  return g;
}

inline FeedbackGains load_gains(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open gains file: " + path);
  json j;
  in >> j;
  return gains_from_json(j);
}

inline void save_gains(const FeedbackGains& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write gains file: " + path);
  out << gains_to_json(g).dump(2) << '\n';
}

/// Channel mini-syntax: "ge:p,q", "iid:pf", "periodic:l,p", "file:<path>".
inline ObservationProcess parse_channel_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("channel spec must look like ge:p,q | iid:pf | periodic:l,p "
                                "| file:<path>, got '" + spec + "'");
  const std::string kind = spec.substr(0, colon);
  const std::string rest = spec.substr(colon + 1);
  auto split2 = [&](double& a, double& b) {
    const auto comma = rest.find(',');
    if (comma == std::string::npos)
      throw std::invalid_argument("channel spec '" + spec + "' needs two parameters");
    a = std::stod(rest.substr(0, comma));
    b = std::stod(rest.substr(comma + 1));
  };
  if (kind == "ge") {
    double p, q;
    split2(p, q);
    return gilbert_elliott(p, q);
  }
  if (kind == "iid") return iid_failures(std::stod(rest));
  if (kind == "periodic") {
    double l, p;
    split2(l, p);
    return periodic_with_failures(static_cast<int>(l), p);
  }
  if (kind == "file") {
    std::ifstream in(rest);
    if (!in) throw std::invalid_argument("cannot open channel file: " + rest);
    json j;
    in >> j;
    return observation_from_json(j.contains("observation") ? j.at("observation") : j);
  }
  throw std::invalid_argument("unknown channel kind '" + kind + "'");
}

/// The two bundled example plants used by the reproduction commands.
inline ModelFile builtin_model(const std::string& name) {
  using Eigen::MatrixXd;
  ModelFile mf;
  if (name == "ex1") {
    mf.name = "ex1";
    MjlsModel& md = mf.model;
    md.N = 2;
    md.n = 4;
    md.m = 2;
    md.l = 6;
    md.q = 4;
    MatrixXd A1(4, 4), A2(4, 4);
    A1 << 0.7017, -1.227, 0.3931, -0.6368,
        -0.4876, -0.6699, -1.7073, -1.0026,
        1.8625, 1.3409, 0.2279, -0.1856,
        1.1069, 0.3881, 0.6856, -1.0540;
    A2 << -0.0715, -0.5420, 0.6716, 0.6250,
        0.2792, 1.6342, -0.5081, -1.0473,
        1.3733, 0.8252, 0.8564, 1.5357,
        0.1798, 0.2308, 0.2685, 0.4344;
    md.A = {A1, A2};
    MatrixXd B = MatrixXd::Zero(4, 2);
    B.topRows(2) = MatrixXd::Identity(2, 2);
    md.B = {B, B};
    MatrixXd C = MatrixXd::Zero(6, 4);
    C.topRows(4) = MatrixXd::Identity(4, 4);
    md.C = {C, C};
    MatrixXd D = MatrixXd::Zero(6, 2);
    D.bottomRows(2) = MatrixXd::Identity(2, 2);
    md.D = {D, D};
    md.E = {MatrixXd::Identity(4, 4), MatrixXd::Identity(4, 4)};
    md.P.resize(2, 2);
    md.P << 0.6942, 0.3058, 0.6942, 0.3058;
    InitialData init;
    init.mu_r.resize(2);
    init.mu_r << 0.6942, 0.3058;
    init.mu_s = Eigen::VectorXd::Constant(2, 0.5);
    init.nu = Eigen::MatrixXd::Constant(2, 1, 0.5);
    mf.initial = init;
    return mf;
  }
  if (name == "ex2") {
    mf.name = "ex2";
    MjlsModel& md = mf.model;
    md.N = 2;
    md.n = 2;
    md.m = 1;
    md.l = 1;
    md.q = 1;
    MatrixXd A1(2, 2), A2(2, 2);
    A1 << -0.6, -0.4, -0.6, -0.4;
    A2 << -0.8, 0.4, 0.8, 0.2;
    md.A = {A1, A2};
    MatrixXd B1(2, 1), B2(2, 1);
    B1 << -0.3, -0.2;
    B2 << -0.2, -0.3;
    md.B = {B1, B2};
    MatrixXd C1(1, 2), C2(1, 2);
    C1 << 0.4, 0.2;
    C2 << 0.1, 0.5;
    md.C = {C1, C2};
    MatrixXd D1(1, 1), D2(1, 1);
    D1 << 0.1;
    D2 << -0.3;
    md.D = {D1, D2};
    MatrixXd E1(2, 1), E2(2, 1);
    E1 << -0.3, -0.3;
    E2 << -0.2, -0.1;
    md.E = {E1, E2};
    md.P.resize(2, 2);
    md.P << 0.1, 0.9, 0.7, 0.3;
    return mf;
  }
  throw std::invalid_argument("unknown builtin model '" + name + "' (expected ex1 or ex2)");
}

/// Resolves "--model" values: bare builtin names or a path to a model file.
inline ModelFile resolve_model(const std::string& spec) {
  if (spec == "ex1" || spec == "ex2") return builtin_model(spec);
  return load_model_file(spec);
}

}  // namespace hmjls
