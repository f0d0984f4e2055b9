#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace psd {

/// One rolled-out episode of a conditioned policy.
struct SkillTrajectory {
  int L = 1;
  Eigen::VectorXd z;       // skill vector, empty when unused
  Eigen::MatrixXd states;  // (T + 1) x obs_dim, row t = s_t
  Eigen::MatrixXd actions; // T x act_dim
  Eigen::VectorXd v_x;     // T
  Eigen::VectorXd r_psd;   // T, filled by annotate_rewards (zeros otherwise)
  Eigen::VectorXd r_ext;   // T
  Eigen::VectorXd task_reward;  // T
  std::uint64_t env_seed = 0;

  int length() const { return static_cast<int>(actions.rows()); }
};

}  // namespace psd
