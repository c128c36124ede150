#include "mvr/pnp.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvr/random.hpp"

namespace mvr {

namespace {

// Control points in the world frame plus each point's barycentric weights.
struct ControlFrame {
  Eigen::Matrix3Xd world;  // 3 x c
  Eigen::MatrixXd alphas;  // n x c
};

std::optional<ControlFrame> make_control_frame(const Eigen::Matrix3Xd& points) {
  const Eigen::Index n = points.cols();
  const Eigen::Vector3d c0 = points.rowwise().mean();
  const Eigen::Matrix3Xd centered = points.colwise() - c0;
  const Eigen::Matrix3d cov = centered * centered.transpose() / static_cast<double>(n);
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  const Eigen::Vector3d ev = es.eigenvalues();  // ascending
  if (!(ev(2) > 1e-18) || ev(1) < 1e-10 * ev(2)) return std::nullopt;  // coincident or collinear
  const bool planar = ev(0) < 1e-10 * ev(2);
  const int c = planar ? 3 : 4;

  ControlFrame f;
  f.world.resize(3, c);
  f.world.col(0) = c0;
  for (int j = 1; j < c; ++j) {
    const int axis = 3 - j;
    f.world.col(j) = c0 + std::sqrt(ev(axis)) * es.eigenvectors().col(axis);
  }
  const Eigen::MatrixXd basis = f.world.rightCols(c - 1).colwise() - c0;
  const Eigen::MatrixXd coeffs = basis.colPivHouseholderQr().solve(centered);  // (c-1) x n
  f.alphas.resize(n, c);
  f.alphas.col(0) = Eigen::VectorXd::Ones(n) - coeffs.colwise().sum().transpose();
  f.alphas.rightCols(c - 1) = coeffs.transpose();
  return f;
}

struct Kernel {
  Eigen::MatrixXd vectors;  // 3c x 3c, ascending singular values
};

Kernel null_space(const Eigen::Matrix2Xd& pixels, const ControlFrame& f, const CameraIntrinsicsd& k) {
  const Eigen::Index n = pixels.cols();
  const Eigen::Index c = f.world.cols();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 3 * c);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      const double a = f.alphas(i, j);
      m(2 * i, 3 * j) = a * k.fx;
      m(2 * i, 3 * j + 2) = a * (k.cx - pixels(0, i));
      m(2 * i + 1, 3 * j + 1) = a * k.fy;
      m(2 * i + 1, 3 * j + 2) = a * (k.cy - pixels(1, i));
    }
  }
  const Eigen::MatrixXd mtm = m.transpose() * m;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(mtm);
  return {es.eigenvectors()};
}

struct PairConstraint {
  Eigen::Index a, b;
  double dist2;
};

// Rows a and b of the stacked control points, differenced: 3 x N.
Eigen::MatrixXd pair_difference(const Eigen::MatrixXd& v, const PairConstraint& p) {
  return v.middleRows(3 * p.a, 3) - v.middleRows(3 * p.b, 3);
}

// Solves |D_p beta|^2 = d_p linearized in the products beta_k beta_l.
std::optional<Eigen::VectorXd> linear_betas(const Eigen::MatrixXd& v, const std::vector<PairConstraint>& pairs) {
  const Eigen::Index nb = v.cols();
  const Eigen::Index unknowns = nb * (nb + 1) / 2;
  if (unknowns > static_cast<Eigen::Index>(pairs.size())) return std::nullopt;
  Eigen::MatrixXd l(static_cast<Eigen::Index>(pairs.size()), unknowns);
  Eigen::VectorXd rho(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const Eigen::MatrixXd d = pair_difference(v, pairs[p]);
    Eigen::Index col = 0;
    for (Eigen::Index a = 0; a < nb; ++a) {
      for (Eigen::Index b = a; b < nb; ++b) {
        l(static_cast<Eigen::Index>(p), col++) = (a == b ? 1.0 : 2.0) * d.col(a).dot(d.col(b));
      }
    }
    rho(static_cast<Eigen::Index>(p)) = pairs[p].dist2;
  }
  const Eigen::VectorXd prod = l.colPivHouseholderQr().solve(rho);
  Eigen::VectorXd beta(nb);
  const double b00 = prod(0);
  beta(0) = std::sqrt(std::abs(b00));
  if (beta(0) < 1e-300) return std::nullopt;
  for (Eigen::Index a = 1; a < nb; ++a) beta(a) = prod(a) / beta(0);
  return beta;
}

void refine_betas(const Eigen::MatrixXd& v, const std::vector<PairConstraint>& pairs, Eigen::VectorXd& beta) {
  const Eigen::Index nb = v.cols();
  std::vector<Eigen::MatrixXd> diffs;
  for (const auto& p : pairs) diffs.push_back(pair_difference(v, p));
  for (int it = 0; it < 50; ++it) {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(pairs.size()), nb);
    Eigen::VectorXd r(static_cast<Eigen::Index>(pairs.size()));
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const Eigen::Vector3d db = diffs[p] * beta;
      r(static_cast<Eigen::Index>(p)) = db.squaredNorm() - pairs[p].dist2;
      j.row(static_cast<Eigen::Index>(p)) = 2.0 * db.transpose() * diffs[p];
    }
    const Eigen::MatrixXd h = j.transpose() * j + 1e-12 * Eigen::MatrixXd::Identity(nb, nb);
    const Eigen::VectorXd step = h.ldlt().solve(-j.transpose() * r);
    if (!step.allFinite()) return;
    beta += step;
    if (step.norm() < 1e-14 * (1.0 + beta.norm())) return;
  }
}

std::optional<Pose3d> pose_from_betas(const Eigen::MatrixXd& v, const Eigen::VectorXd& beta, const ControlFrame& f,
                                      const Eigen::Matrix3Xd& points) {
  const Eigen::Index c = f.world.cols();
  const Eigen::VectorXd stacked = v * beta;
  Eigen::Matrix3Xd ccam(3, c);
  for (Eigen::Index j = 0; j < c; ++j) ccam.col(j) = stacked.segment<3>(3 * j);
  Eigen::Matrix3Xd pc = ccam * f.alphas.transpose();
  if (pc.row(2).mean() < 0) pc = -pc;
  if (!pc.allFinite()) return std::nullopt;
  const Eigen::Matrix4d t = Eigen::umeyama(points, pc, false);
  if (!t.allFinite()) return std::nullopt;
  return Pose3d::from_matrix(t);
}

Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d s;
  s << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return s;
}

double reprojection_cost(const Eigen::Matrix2Xd& pixels, const Eigen::Matrix3Xd& points,
                         const CameraIntrinsicsd& k, const Pose3d& pose) {
  const Eigen::Matrix3Xd pc = pose.transform(points);
  double cost = 0;
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const double z = pc(2, i);
    if (z <= 1e-9) return std::numeric_limits<double>::infinity();
    const double du = k.fx * pc(0, i) / z + k.cx - pixels(0, i);
    const double dv = k.fy * pc(1, i) / z + k.cy - pixels(1, i);
    cost += du * du + dv * dv;
  }
  return cost;
}

template <typename Index>
std::pair<Eigen::Matrix2Xd, Eigen::Matrix3Xd> select(const Eigen::Matrix2Xd& pixels, const Eigen::Matrix3Xd& points,
                                                     const std::vector<Index>& idx) {
  Eigen::Matrix2Xd px(2, static_cast<Eigen::Index>(idx.size()));
  Eigen::Matrix3Xd pt(3, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    px.col(static_cast<Eigen::Index>(i)) = pixels.col(static_cast<Eigen::Index>(idx[i]));
    pt.col(static_cast<Eigen::Index>(i)) = points.col(static_cast<Eigen::Index>(idx[i]));
  }
  return {px, pt};
}

}  // namespace

std::optional<Pose3d> epnp(const Eigen::Matrix2Xd& pixels, const Eigen::Matrix3Xd& points,
                           const CameraIntrinsicsd& intr) {
  if (points.cols() < 4 || pixels.cols() != points.cols()) return std::nullopt;
  const auto frame = make_control_frame(points);
  if (!frame) return std::nullopt;
  const Eigen::Index c = frame->world.cols();
  const Kernel kernel = null_space(pixels, *frame, intr);

  std::vector<PairConstraint> pairs;
  for (Eigen::Index a = 0; a < c; ++a) {
    for (Eigen::Index b = a + 1; b < c; ++b) {
      pairs.push_back({a, b, (frame->world.col(a) - frame->world.col(b)).squaredNorm()});
    }
  }

  std::optional<Pose3d> best;
  double best_cost = std::numeric_limits<double>::infinity();
  auto consider = [&](const Eigen::MatrixXd& v, Eigen::VectorXd beta) {
    refine_betas(v, pairs, beta);
    const auto pose = pose_from_betas(v, beta, *frame, points);
    if (!pose) return beta;
    const double cost = reprojection_cost(pixels, points, intr, *pose);
    if (cost < best_cost) {
      best_cost = cost;
      best = pose;
    }
    return beta;
  };
  // Solutions of lower kernel dimension seed the higher ones when the
  // linearized system is underdetermined.
  std::vector<Eigen::VectorXd> seeds;
  const Eigen::Index max_dim = c == 4 ? 4 : 3;
  for (Eigen::Index nb = 1; nb <= max_dim; ++nb) {
    const Eigen::MatrixXd v = kernel.vectors.leftCols(nb);
    if (auto lin = linear_betas(v, pairs)) {
      seeds.push_back(consider(v, *lin));
      continue;
    }
    std::vector<Eigen::VectorXd> next;
    for (const auto& s : seeds) {
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(nb);
      beta.head(s.size()) = s;
      next.push_back(consider(v, beta));
    }
    seeds.insert(seeds.end(), next.begin(), next.end());
  }
  // Minimal non-coplanar sets leave a four-dimensional kernel where the
  // beta estimate is only approximate; polish it on the same points.
  if (best && best_cost > 1e-12 * static_cast<double>(points.cols())) {
    best = refine_pose(pixels, points, intr, *best, 10);
  }
  return best;
}

Eigen::VectorXd reprojection_errors(const Eigen::Matrix2Xd& pixels, const Eigen::Matrix3Xd& points,
                                    const CameraIntrinsicsd& k, const Pose3d& pose) {
  const Eigen::Matrix3Xd pc = pose.transform(points);
  Eigen::VectorXd e(points.cols());
  for (Eigen::Index i = 0; i < points.cols(); ++i) {
    const double z = pc(2, i);
    if (z <= 1e-9) {
      e(i) = std::numeric_limits<double>::infinity();
      continue;
    }
    e(i) = std::hypot(k.fx * pc(0, i) / z + k.cx - pixels(0, i), k.fy * pc(1, i) / z + k.cy - pixels(1, i));
  }
  return e;
}

Pose3d refine_pose(const Eigen::Matrix2Xd& pixels, const Eigen::Matrix3Xd& points, const CameraIntrinsicsd& k,
                   const Pose3d& world_to_cam, int max_iterations) {
  Pose3d pose = world_to_cam;
  double cost = reprojection_cost(pixels, points, k, pose);
  if (!std::isfinite(cost)) return pose;
  double lambda = 1e-4;
  const Eigen::Index n = points.cols();
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::MatrixXd j(2 * n, 6);
    Eigen::VectorXd r(2 * n);
    const Eigen::Matrix3Xd rotated = pose.rotation() * points;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Vector3d p = rotated.col(i) + pose.translation();
      const double iz = 1.0 / p.z();
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * iz, 0, -k.fx * p.x() * iz * iz, 0, k.fy * iz, -k.fy * p.y() * iz * iz;
      r(2 * i) = k.fx * p.x() * iz + k.cx - pixels(0, i);
      r(2 * i + 1) = k.fy * p.y() * iz + k.cy - pixels(1, i);
      j.block<2, 3>(2 * i, 0) = -dproj * skew(rotated.col(i));
      j.block<2, 3>(2 * i, 3) = dproj;
    }
    const Eigen::Matrix<double, 6, 6> h = j.transpose() * j;
    const Eigen::Matrix<double, 6, 1> g = j.transpose() * r;
    bool improved = false;
    Eigen::Matrix<double, 6, 1> step = Eigen::Matrix<double, 6, 1>::Zero();
    while (lambda < 1e12) {
      Eigen::Matrix<double, 6, 6> damped = h;
      damped.diagonal() += lambda * (h.diagonal().array() + 1e-12).matrix();
      step = damped.ldlt().solve(-g);
      const Eigen::Vector3d w = step.head<3>();
      const double angle = w.norm();
      const Eigen::Matrix3d dr =
          angle > 0 ? Eigen::AngleAxisd(angle, w / angle).toRotationMatrix() : Eigen::Matrix3d::Identity();
      const Pose3d candidate(dr * pose.rotation(), pose.translation() + step.tail<3>());
      const double c = reprojection_cost(pixels, points, k, candidate);
      if (c < cost) {
        // Keep the rotation numerically orthonormal.
        const Eigen::Quaterniond q(candidate.rotation());
        pose = Pose3d(q.normalized().toRotationMatrix(), candidate.translation());
        cost = reprojection_cost(pixels, points, k, pose);
        lambda = std::max(lambda * 0.1, 1e-12);
        improved = true;
        break;
      }
      lambda *= 10;
    }
    if (!improved || step.norm() < 1e-15) break;
  }
  return pose;
}

namespace {

struct Scored {
  Pose3d pose;
  std::vector<int> inliers;
  double score = std::numeric_limits<double>::infinity();
};

// MSAC: squared reprojection error truncated at the threshold.
Scored score_pose(const Eigen::Matrix2Xd& pixels, const Eigen::Matrix3Xd& points, const CameraIntrinsicsd& intr,
                  const Pose3d& pose, double threshold) {
  const Eigen::VectorXd e = reprojection_errors(pixels, points, intr, pose);
  Scored s;
  s.pose = pose;
  s.score = 0;
  const double t2 = threshold * threshold;
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const double e2 = std::isfinite(e(i)) ? e(i) * e(i) : t2;
    if (e2 <= t2) s.inliers.push_back(static_cast<int>(i));
    s.score += std::min(e2, t2);
  }
  return s;
}

// Refit on the inliers and re-score, while the score improves.
Scored local_optimize(const Eigen::Matrix2Xd& pixels, const Eigen::Matrix3Xd& points, const CameraIntrinsicsd& intr,
                      Scored current, const RansacConfig& config) {
  for (int round = 0; round < 4 && current.inliers.size() >= 4; ++round) {
    const auto [px, pt] = select(pixels, points, current.inliers);
    Pose3d start = current.pose;
    if (const auto refit = epnp(px, pt, intr)) {
      if (reprojection_cost(px, pt, intr, *refit) < reprojection_cost(px, pt, intr, start)) start = *refit;
    }
    const Pose3d refined = refine_pose(px, pt, intr, start, config.refine_iterations);
    Scored next = score_pose(pixels, points, intr, refined, config.reprojection_threshold);
    if (!(next.score < current.score)) break;
    const bool same = next.inliers == current.inliers;
    current = std::move(next);
    if (same) break;
  }
  return current;
}

}  // namespace

RansacResult ransac_pnp(const Eigen::Matrix2Xd& pixels, const Eigen::Matrix3Xd& points, const CameraIntrinsicsd& intr,
                        const RansacConfig& config) {
  const Eigen::Index n = points.cols();
  if (n < 4) throw TooFewCorrespondences("PnP needs at least 4 correspondences");
  Rng rng(config.seed);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(n) - 1);

  std::optional<Scored> best;
  int needed = config.max_iterations;
  int it = 0;
  for (; it < needed && it < config.max_iterations; ++it) {
    std::vector<int> sample;
    while (sample.size() < 4) {
      const int s = pick(rng);
      if (std::find(sample.begin(), sample.end(), s) == sample.end()) sample.push_back(s);
    }
    const auto [px, pt] = select(pixels, points, sample);
    const auto pose = epnp(px, pt, intr);
    if (!pose) continue;
    Scored s = score_pose(pixels, points, intr, *pose, config.reprojection_threshold);
    if (best && !(s.score < best->score)) continue;
    best = local_optimize(pixels, points, intr, std::move(s), config);
    const double w = static_cast<double>(best->inliers.size()) / static_cast<double>(n);
    if (w >= 1.0) {
      needed = it + 1;
    } else if (w > 0) {
      const double denom = std::log(1.0 - std::pow(w, 4));
      if (denom < 0) {
        const double k = std::ceil(std::log(1.0 - config.confidence) / denom);
        needed = static_cast<int>(std::min<double>(config.max_iterations, k));
      }
    }
  }
  if (!best) throw DegenerateGeometry("no minimal sample produced a pose");

  RansacResult res;
  res.iterations = it;
  res.world_to_cam = best->pose;
  res.inliers = std::move(best->inliers);
  return res;
}

}  // namespace mvr
