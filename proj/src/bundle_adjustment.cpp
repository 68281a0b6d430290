/******************************************************************************
 * Copyright 2026 The ttpark Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *****************************************************************************/
#include "ttpark/bundle_adjustment.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "reprojection.hpp"
#include "ttpark/errors.hpp"

namespace ttpark {

namespace {

using detail::Mat23;
using detail::Mat26;
using detail::Mat6;
using Mat63 = Eigen::Matrix<double, 6, 3>;

using LandmarkIndex = std::unordered_map<std::uint32_t, std::size_t>;

LandmarkIndex index_landmarks(const std::vector<MapLandmark>& landmarks) {
  LandmarkIndex index;
  index.reserve(landmarks.size());
  for (std::size_t i = 0; i < landmarks.size(); ++i) index.emplace(landmarks[i].id, i);
  return index;
}

std::size_t resolve(const LandmarkIndex& index, const Keyframe& kf,
                    const KeyframeObservation& obs) {
  auto it = index.find(obs.landmark_id);
  if (it == index.end()) {
    throw Error(ErrorCode::kIntegrity, "keyframe " + std::to_string(kf.id) +
                                           " observes missing landmark " +
                                           std::to_string(obs.landmark_id));
  }
  return it->second;
}

void check_camera(const CameraRig& rig, const Keyframe& kf, const KeyframeObservation& obs) {
  if (obs.camera >= rig.size()) {
    throw Error(ErrorCode::kIntegrity, "keyframe " + std::to_string(kf.id) +
                                           " references camera " + std::to_string(obs.camera));
  }
}

double min_max_eigen_ratio(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double hi = es.eigenvalues().maxCoeff();
  if (!(hi > 0.0)) return 0.0;
  return es.eigenvalues().minCoeff() / hi;
}

constexpr double kRankRatio = 1e-10;
constexpr double kRoundingFloorPx = 1e-10;

/// Flattened view of the observations entering the problem.
struct Term {
  std::size_t keyframe;
  std::size_t landmark;
  const KeyframeObservation* obs;
};

}  // namespace

void BAConfig::validate() const {
  if (window_n < 2) throw Error(ErrorCode::kConfig, "ba.window_n must be >= 2");
  if (max_iterations < 0) throw Error(ErrorCode::kConfig, "ba.max_iterations must be >= 0");
  if (!(huber_delta_px > 0.0)) throw Error(ErrorCode::kConfig, "ba.huber_delta_px must be > 0");
  if (!(initial_damping > 0.0)) throw Error(ErrorCode::kConfig, "ba.initial_damping must be > 0");
  if (!(convergence_tol >= 0.0)) throw Error(ErrorCode::kConfig, "ba.convergence_tol must be >= 0");
}

ResidualSet reprojection_residuals(const std::vector<Keyframe>& keyframes,
                                   const std::vector<MapLandmark>& landmarks, const CameraRig& rig,
                                   double huber_delta_px) {
  const LandmarkIndex index = index_landmarks(landmarks);
  std::size_t n = 0;
  for (const Keyframe& kf : keyframes) n += kf.observations.size();
  ResidualSet out;
  out.residuals.resize(static_cast<Eigen::Index>(2 * n));
  out.weights.reserve(n);
  std::size_t row = 0;
  const double saturation = kSaturationInDeltas * huber_delta_px;
  for (const Keyframe& kf : keyframes) {
    const Pose vfw = inverse(kf.pose);
    for (const KeyframeObservation& obs : kf.observations) {
      check_camera(rig, kf, obs);
      const MapLandmark& lm = landmarks[resolve(index, kf, obs)];
      Vec2 r;
      detail::rig_residual(rig.camera(obs.camera), vfw, lm.position, obs.pixel, saturation, &r);
      out.residuals.segment<2>(static_cast<Eigen::Index>(2 * row)) = r;
      out.weights.push_back(obs.weight);
      if (obs.weight > 0.0) out.cost += obs.weight * detail::huber(r.norm(), huber_delta_px);
      ++row;
    }
  }
  return out;
}

double reprojection_rmse(const std::vector<Keyframe>& keyframes,
                         const std::vector<MapLandmark>& landmarks, const CameraRig& rig) {
  const ResidualSet rs = reprojection_residuals(keyframes, landmarks, rig);
  double sq = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < rs.weights.size(); ++i) {
    if (rs.weights[i] <= 0.0) continue;
    sq += rs.residuals.segment<2>(static_cast<Eigen::Index>(2 * i)).squaredNorm();
    ++n;
  }
  return n == 0 ? 0.0 : std::sqrt(sq / static_cast<double>(n));
}

Eigen::MatrixXd BAJacobian::dense() const {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n_observations),
                                            static_cast<Eigen::Index>(6 * n_keyframes + 3 * n_landmarks));
  for (const JacobianBlock& b : blocks) {
    const auto row = static_cast<Eigen::Index>(2 * b.observation);
    j.block<2, 6>(row, static_cast<Eigen::Index>(6 * b.keyframe)) = b.d_pose;
    j.block<2, 3>(row, static_cast<Eigen::Index>(6 * n_keyframes + 3 * b.landmark)) = b.d_point;
  }
  return j;
}

BAJacobian ba_jacobian(const std::vector<Keyframe>& keyframes,
                       const std::vector<MapLandmark>& landmarks, const CameraRig& rig,
                       double huber_delta_px) {
  const LandmarkIndex index = index_landmarks(landmarks);
  BAJacobian jac;
  jac.n_keyframes = keyframes.size();
  jac.n_landmarks = landmarks.size();
  const double saturation = kSaturationInDeltas * huber_delta_px;
  std::size_t row = 0;
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    const Keyframe& kf = keyframes[k];
    const Pose vfw = inverse(kf.pose);
    for (const KeyframeObservation& obs : kf.observations) {
      check_camera(rig, kf, obs);
      JacobianBlock b;
      b.observation = row++;
      b.keyframe = k;
      b.landmark = resolve(index, kf, obs);
      if (obs.weight > 0.0) {
        Vec2 r;
        detail::rig_residual(rig.camera(obs.camera), vfw, landmarks[b.landmark].position,
                             obs.pixel, saturation, &r, &b.d_pose, &b.d_point);
        const double s = std::sqrt(obs.weight);
        b.d_pose *= s;
        b.d_point *= s;
      }
      jac.blocks.push_back(b);
    }
  }
  jac.n_observations = row;
  return jac;
}

BAReport bundle_adjust(std::vector<Keyframe>& keyframes, std::vector<MapLandmark>& landmarks,
                       const CameraRig& rig, const BAConfig& config,
                       const std::set<std::uint32_t>& fixed_keyframe_ids,
                       const std::set<std::uint32_t>& fixed_landmark_ids) {
  config.validate();
  bool any_fixed = false;
  for (const Keyframe& kf : keyframes) any_fixed = any_fixed || fixed_keyframe_ids.count(kf.id);
  if (!any_fixed) {
    throw Error(ErrorCode::kConfig, "bundle adjustment needs at least one fixed keyframe");
  }
  const double delta = config.huber_delta_px;
  const double saturation = kSaturationInDeltas * delta;

  BAReport report;
  std::vector<std::uint32_t> pruned;
  for (;;) {
    const LandmarkIndex index = index_landmarks(landmarks);

    // Variable blocks.
    std::vector<int> pose_var(keyframes.size(), -1);
    int n_pose = 0;
    for (std::size_t k = 0; k < keyframes.size(); ++k) {
      if (!fixed_keyframe_ids.count(keyframes[k].id)) pose_var[k] = n_pose++;
    }
    std::vector<Term> terms;
    std::vector<int> lm_var(landmarks.size(), -1);
    int n_lm = 0;
    for (std::size_t k = 0; k < keyframes.size(); ++k) {
      for (const KeyframeObservation& obs : keyframes[k].observations) {
        check_camera(rig, keyframes[k], obs);
        const std::size_t j = resolve(index, keyframes[k], obs);
        if (obs.weight <= 0.0) continue;
        terms.push_back({k, j, &obs});
      }
    }
    for (const Term& t : terms) {
      if (lm_var[t.landmark] < 0 && !fixed_landmark_ids.count(landmarks[t.landmark].id)) {
        lm_var[t.landmark] = n_lm++;
      }
    }

    std::vector<Pose> vfw(keyframes.size());
    for (std::size_t k = 0; k < keyframes.size(); ++k) vfw[k] = inverse(keyframes[k].pose);
    std::vector<Vec3> pts(landmarks.size());
    for (std::size_t j = 0; j < landmarks.size(); ++j) pts[j] = landmarks[j].position;

    auto evaluate = [&](const std::vector<Pose>& poses, const std::vector<Vec3>& points,
                        double* sq_sum) {
      double cost = 0.0;
      double sq = 0.0;
      for (const Term& t : terms) {
        Vec2 r;
        detail::rig_residual(rig.camera(t.obs->camera), poses[t.keyframe], points[t.landmark],
                             t.obs->pixel, saturation, &r);
        const double n = r.norm();
        cost += t.obs->weight * detail::huber(n, delta);
        sq += n * n;
      }
      if (sq_sum) *sq_sum = sq;
      return cost;
    };
    auto rmse_of = [&](double sq) {
      return terms.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(terms.size()));
    };

    double sq = 0.0;
    double cost = evaluate(vfw, pts, &sq);
    report = BAReport{};
    report.initial_cost = report.final_cost = cost;
    report.initial_rmse_px = report.final_rmse_px = rmse_of(sq);
    report.cost_history.push_back(cost);

    // Landmark-pose coupling blocks, one list per variable landmark.
    std::vector<std::vector<std::pair<int, Mat63>>> coupling(static_cast<std::size_t>(n_lm));
    std::vector<Mat6> u(static_cast<std::size_t>(n_pose));
    std::vector<Vec6> gp(static_cast<std::size_t>(n_pose));
    std::vector<Mat3> v(static_cast<std::size_t>(n_lm));
    std::vector<Vec3> gl(static_cast<std::size_t>(n_lm));

    auto build = [&]() {
      for (auto& m : u) m.setZero();
      for (auto& g : gp) g.setZero();
      for (auto& m : v) m.setZero();
      for (auto& g : gl) g.setZero();
      for (auto& c : coupling) c.clear();
      for (const Term& t : terms) {
        const int pi = pose_var[t.keyframe];
        const int li = lm_var[t.landmark];
        if (pi < 0 && li < 0) continue;
        Vec2 r;
        Mat26 jp;
        Mat23 jl;
        if (!detail::rig_residual(rig.camera(t.obs->camera), vfw[t.keyframe], pts[t.landmark],
                                  t.obs->pixel, saturation, &r, &jp, &jl)) {
          continue;
        }
        const double s = t.obs->weight * detail::huber_weight(r.norm(), delta);
        if (pi >= 0) {
          u[pi].noalias() += s * jp.transpose() * jp;
          gp[pi].noalias() += s * jp.transpose() * r;
        }
        if (li >= 0) {
          v[li].noalias() += s * jl.transpose() * jl;
          gl[li].noalias() += s * jl.transpose() * r;
        }
        if (pi >= 0 && li >= 0) {
          auto& list = coupling[li];
          auto it = std::find_if(list.begin(), list.end(),
                                 [pi](const auto& e) { return e.first == pi; });
          if (it == list.end()) {
            list.emplace_back(pi, Mat63::Zero());
            it = std::prev(list.end());
          }
          it->second.noalias() += s * jp.transpose() * jl;
        }
      }
    };

    build();

    // Observability of each landmark block.
    std::vector<std::uint32_t> unobservable;
    for (std::size_t j = 0; j < landmarks.size(); ++j) {
      const int li = lm_var[j];
      if (li < 0) continue;
      if (min_max_eigen_ratio(v[li]) < kRankRatio) unobservable.push_back(landmarks[j].id);
    }
    if (!unobservable.empty()) {
      if (!config.prune_unobservable) {
        throw Error(ErrorCode::kRankDeficiency,
                    "landmark " + std::to_string(unobservable.front()) +
                        " position is unobservable (singular 3x3 block)");
      }
      const std::set<std::uint32_t> drop(unobservable.begin(), unobservable.end());
      for (Keyframe& kf : keyframes) {
        std::erase_if(kf.observations,
                      [&](const KeyframeObservation& o) { return drop.count(o.landmark_id) > 0; });
      }
      std::erase_if(landmarks, [&](const MapLandmark& lm) { return drop.count(lm.id) > 0; });
      pruned.insert(pruned.end(), unobservable.begin(), unobservable.end());
      continue;
    }

    const auto np = static_cast<Eigen::Index>(6 * n_pose);
    auto reduced_system = [&](double lambda, Eigen::MatrixXd* s, Eigen::VectorXd* rhs,
                              std::vector<Mat3>* v_inv) {
      s->setZero(np, np);
      rhs->setZero(np);
      for (int p = 0; p < n_pose; ++p) {
        Mat6 d = u[p];
        d.diagonal() += lambda * (u[p].diagonal().array() + 1e-12).matrix();
        s->block<6, 6>(6 * p, 6 * p) = d;
        rhs->segment<6>(6 * p) = -gp[p];
      }
      v_inv->resize(static_cast<std::size_t>(n_lm));
      for (int l = 0; l < n_lm; ++l) {
        Mat3 d = v[l];
        d.diagonal() += lambda * (v[l].diagonal().array() + 1e-12).matrix();
        (*v_inv)[l] = d.inverse();
        const auto& list = coupling[l];
        for (const auto& [a, wa] : list) {
          const Mat63 wa_vinv = wa * (*v_inv)[l];
          rhs->segment<6>(6 * a) += wa_vinv * gl[l];
          for (const auto& [b, wb] : list) {
            s->block<6, 6>(6 * a, 6 * b).noalias() -= wa_vinv * wb.transpose();
          }
        }
      }
    };

    // Pose-block observability, checked once on the undamped system.
    if (n_pose > 0) {
      Eigen::MatrixXd s0;
      Eigen::VectorXd rhs0;
      std::vector<Mat3> v_inv0;
      reduced_system(0.0, &s0, &rhs0, &v_inv0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s0);
      const Eigen::VectorXd& ev = es.eigenvalues();
      if (!(ev(ev.size() - 1) > 0.0) || ev(0) / ev(ev.size() - 1) < kRankRatio) {
        const Eigen::VectorXd null = es.eigenvectors().col(0).cwiseAbs();
        int worst = 0;
        double best = -1.0;
        for (int p = 0; p < n_pose; ++p) {
          const double m = null.segment<6>(6 * p).norm();
          if (m > best) {
            best = m;
            worst = p;
          }
        }
        std::uint32_t id = 0;
        for (std::size_t k = 0; k < keyframes.size(); ++k) {
          if (pose_var[k] == worst) id = keyframes[k].id;
        }
        throw Error(ErrorCode::kRankDeficiency,
                    "keyframe " + std::to_string(id) + " pose is under-constrained");
      }
    }

    double lambda = config.initial_damping;
    bool changed = false;
    for (int iter = 0; iter < config.max_iterations; ++iter) {
      double grad = 0.0;
      for (const auto& g : gp) grad = std::max(grad, g.lpNorm<Eigen::Infinity>());
      for (const auto& g : gl) grad = std::max(grad, g.lpNorm<Eigen::Infinity>());
      // Residuals at the rounding floor of pixel coordinates leave nothing to fit.
      if (rmse_of(sq) < kRoundingFloorPx || grad < 1e-14) {
        report.converged = true;
        break;
      }
      ++report.iterations;
      bool accepted = false;
      bool stalled = false;
      while (!accepted) {
        Eigen::MatrixXd s;
        Eigen::VectorXd rhs;
        std::vector<Mat3> v_inv;
        reduced_system(lambda, &s, &rhs, &v_inv);
        Eigen::VectorXd dp = Eigen::VectorXd::Zero(np);
        if (n_pose > 0) {
          Eigen::LLT<Eigen::MatrixXd> llt(s);
          if (llt.info() == Eigen::Success) {
            dp = llt.solve(rhs);
          } else {
            lambda *= 10.0;
            if (lambda > 1e12) {
              stalled = true;
              break;
            }
            continue;
          }
        }
        std::vector<Pose> cand_poses = vfw;
        for (std::size_t k = 0; k < keyframes.size(); ++k) {
          if (pose_var[k] >= 0) {
            cand_poses[k] = retract_left(vfw[k], dp.segment<6>(6 * pose_var[k]));
          }
        }
        std::vector<Vec3> cand_pts = pts;
        double step_sq = dp.squaredNorm();
        for (std::size_t j = 0; j < landmarks.size(); ++j) {
          const int l = lm_var[j];
          if (l < 0) continue;
          Vec3 rhs_l = -gl[l];
          for (const auto& [a, wa] : coupling[l]) rhs_l -= wa.transpose() * dp.segment<6>(6 * a);
          const Vec3 dl = v_inv[l] * rhs_l;
          cand_pts[j] = pts[j] + dl;
          step_sq += dl.squaredNorm();
        }
        double cand_sq = 0.0;
        const double cand_cost = evaluate(cand_poses, cand_pts, &cand_sq);
        if (std::isfinite(cand_cost) && cand_cost < cost) {
          const double rel = (cost - cand_cost) / cost;
          vfw = std::move(cand_poses);
          pts = std::move(cand_pts);
          cost = cand_cost;
          sq = cand_sq;
          changed = true;
          report.cost_history.push_back(cost);
          lambda = std::max(lambda * 0.1, 1e-12);
          accepted = true;
          if (rel < config.convergence_tol || step_sq < 1e-28) report.converged = true;
        } else {
          lambda *= 10.0;
          if (lambda > 1e12) {
            stalled = true;
            break;
          }
        }
      }
      if (stalled) {
        // No cost-reducing step exists at working precision.
        report.converged = true;
        break;
      }
      if (report.converged) break;
      build();
    }

    if (changed) {
      for (std::size_t k = 0; k < keyframes.size(); ++k) {
        if (pose_var[k] >= 0) keyframes[k].pose = inverse(vfw[k]);
      }
      for (std::size_t j = 0; j < landmarks.size(); ++j) {
        if (lm_var[j] >= 0) landmarks[j].position = pts[j];
      }
    }
    report.final_cost = cost;
    report.final_rmse_px = rmse_of(sq);
    report.pruned_landmarks = std::move(pruned);
    return report;
  }
}

BAReport windowed_ba(MapState& state, const CameraRig& rig, const BAConfig& config) {
  config.validate();
  auto& kfs = state.keyframes;
  if (kfs.empty()) throw Error(ErrorCode::kArity, "windowed bundle adjustment on an empty map");
  const std::size_t window = std::min<std::size_t>(static_cast<std::size_t>(config.window_n), kfs.size());
  const std::size_t first_in_window = kfs.size() - window;

  std::set<std::uint32_t> fixed_kf;
  fixed_kf.insert(kfs.front().id);
  std::set<std::uint32_t> observed;
  for (std::size_t k = 0; k < kfs.size(); ++k) {
    if (k < first_in_window) {
      fixed_kf.insert(kfs[k].id);
      continue;
    }
    for (const KeyframeObservation& o : kfs[k].observations) {
      if (o.weight > 0.0) observed.insert(o.landmark_id);
    }
  }
  std::set<std::uint32_t> fixed_lm;
  for (const MapLandmark& lm : state.landmarks) {
    if (!observed.count(lm.id)) fixed_lm.insert(lm.id);
  }
  return bundle_adjust(kfs, state.landmarks, rig, config, fixed_kf, fixed_lm);
}

}  // namespace ttpark
