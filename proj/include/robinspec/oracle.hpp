#pragma once

#include "robinspec/spectral.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace robinspec {

/// The only data channel the inversion side may use: omega -> first K eigenvalues.
/// Eigenvectors are deliberately not reachable through this interface.
class SpectralOracle {
public:
  virtual ~SpectralOracle() = default;

  /// Ascending eigenvalues lambda_1..lambda_K of A^omega.
  virtual Eigen::VectorXd eigenvalues(const Eigen::VectorXd& omega) = 0;
  virtual int count() const = 0;
  virtual int boundary_size() const = 0;
};

struct OracleRecord {
  Eigen::VectorXd omega;
  Eigen::VectorXd eigenvalues;
};

/// Key with exact nodal equality (-0.0 == 0.0).
struct FieldLess {
  bool operator()(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;
};

/// Forward-solver backed oracle with an exact-match query cache.
class ForwardOracle final : public SpectralOracle {
public:
  ForwardOracle(std::shared_ptr<const ForwardModel> model, int count,
                SolverOptions options = {});

  Eigen::VectorXd eigenvalues(const Eigen::VectorXd& omega) override;
  int count() const override { return count_; }
  int boundary_size() const override { return model_->bmesh.size(); }

  std::size_t solves() const { return solves_; }

private:
  std::shared_ptr<const ForwardModel> model_;
  int count_;
  SolverOptions options_;
  std::map<Eigen::VectorXd, Eigen::VectorXd, FieldLess> cache_;
  std::size_t solves_ = 0;
};

/// Wraps another oracle and keeps the distinct queries in first-seen order.
class RecordingOracle final : public SpectralOracle {
public:
  explicit RecordingOracle(SpectralOracle& inner) : inner_(inner) {}

  Eigen::VectorXd eigenvalues(const Eigen::VectorXd& omega) override;
  int count() const override { return inner_.count(); }
  int boundary_size() const override { return inner_.boundary_size(); }

  const std::vector<OracleRecord>& records() const { return records_; }

private:
  SpectralOracle& inner_;
  std::vector<OracleRecord> records_;
  std::map<Eigen::VectorXd, std::size_t, FieldLess> seen_;
};

/// Plays back recorded (omega, eigenvalues) pairs. Unknown queries throw
/// MissingQueryError naming the omega hash.
class ReplayOracle final : public SpectralOracle {
public:
  ReplayOracle(std::vector<OracleRecord> records, int count, int boundary_size);

  Eigen::VectorXd eigenvalues(const Eigen::VectorXd& omega) override;
  int count() const override { return count_; }
  int boundary_size() const override { return boundary_size_; }

private:
  std::map<Eigen::VectorXd, Eigen::VectorXd, FieldLess> table_;
  int count_;
  int boundary_size_;
};

/// Replay file: JSON array of {"omega": [...], "eigenvalues": [...]}.
void write_oracle_file(const std::filesystem::path& path, const std::vector<OracleRecord>& records);
std::vector<OracleRecord> read_oracle_file(const std::filesystem::path& path);
/// Builds a replay oracle; count and boundary size are taken from the records
/// (or the given fallbacks when the file is empty).
ReplayOracle load_replay_oracle(const std::filesystem::path& path, int fallback_count,
                                int fallback_boundary_size);

std::string field_hash_hex(const Eigen::VectorXd& omega);

}  // namespace robinspec
