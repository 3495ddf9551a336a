#pragma once

#include <cmath>

#include "hmjls/model.hpp"
#include "hmjls/rng.hpp"

namespace testutil {

inline Eigen::MatrixXd random_stochastic(hmjls::CounterRng& rng, int rows, int cols) {
  Eigen::MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (int j = 0; j < cols; ++j) {
      M(i, j) = -std::log(1.0 - rng.next_double());
      sum += M(i, j);
    }
    M.row(i) /= sum;
  }
  return M;
}

inline Eigen::MatrixXd random_matrix(hmjls::CounterRng& rng, int rows, int cols,
                                     double scale = 1.0) {
  Eigen::MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) M(i, j) = scale * rng.next_normal();
  return M;
}

inline Eigen::MatrixXd random_symmetric(hmjls::CounterRng& rng, int n, double scale = 1.0) {
  Eigen::MatrixXd M = random_matrix(rng, n, n, scale);
  return Eigen::MatrixXd(0.5 * (M + M.transpose()));
}

/// Plant with A entries scaled so closed/open-loop spectral radii land on
/// both sides of 1 across draws.
inline hmjls::MjlsModel random_model(hmjls::CounterRng& rng, int N, int n, int m, int l, int q,
                                     double a_scale = 0.7) {
  hmjls::MjlsModel md;
  md.N = N;
  md.n = n;
  md.m = m;
  md.l = l;
  md.q = q;
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < N; ++i) {
    md.A.push_back(random_matrix(rng, n, n, a_scale * s));
    md.B.push_back(random_matrix(rng, n, m, s));
    md.C.push_back(random_matrix(rng, l, n, s));
    md.D.push_back(random_matrix(rng, l, m, s));
    md.E.push_back(random_matrix(rng, n, q, s));
  }
  md.P = random_stochastic(rng, N, N);
  return md;
}

inline hmjls::ObservationProcess random_observation(hmjls::CounterRng& rng, int M) {
  hmjls::ObservationProcess obs;
  obs.M = M;
  obs.Q = random_stochastic(rng, M, M);
  obs.f.resize(M);
  for (int i = 0; i < M; ++i) obs.f[i] = rng.next_double() < 0.5 ? 1 : 0;
  return obs;
}

inline hmjls::FeedbackGains random_gains(hmjls::CounterRng& rng, int N, int T, int m, int n,
                                         double scale = 0.3) {
  hmjls::FeedbackGains g;
  g.N = N;
  g.T = T;
  g.K.resize(N);
  for (int gi = 0; gi < N; ++gi)
    for (int d = 0; d < T; ++d) g.K[gi].push_back(random_matrix(rng, m, n, scale));
  return g;
}

inline hmjls::FeedbackGains zero_gains(int N, int T, int m, int n) {
  hmjls::FeedbackGains g;
  g.N = N;
  g.T = T;
  g.K.assign(N, std::vector<Eigen::MatrixXd>(T, Eigen::MatrixXd::Zero(m, n)));
  return g;
}

/// Scalar single-mode plant x(k+1) = a x + b u + e w, z = c x + d u with a
/// trivial always-observing channel; closed forms are available for it.
inline hmjls::MjlsModel scalar_model(double a, double b, double c, double d, double e) {
  hmjls::MjlsModel md;
  md.N = 1;
  md.n = md.m = md.l = md.q = 1;
  auto mat = [](double v) {
    Eigen::MatrixXd M(1, 1);
    M << v;
    return M;
  };
  md.A = {mat(a)};
  md.B = {mat(b)};
  md.C = {mat(c)};
  md.D = {mat(d)};
  md.E = {mat(e)};
  md.P = Eigen::MatrixXd::Ones(1, 1);
  return md;
}

inline hmjls::ObservationProcess trivial_channel() {
  hmjls::ObservationProcess obs;
  obs.M = 1;
  obs.Q = Eigen::MatrixXd::Ones(1, 1);
  obs.f = {1};
  return obs;
}

}  // namespace testutil
