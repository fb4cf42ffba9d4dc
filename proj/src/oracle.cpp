#include "robinspec/oracle.hpp"

#include "robinspec/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace robinspec {

bool FieldLess::operator()(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(),
                                      b.data() + b.size());
}

std::string field_hash_hex(const Eigen::VectorXd& omega) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(hash_field(omega)));
  return buf;
}

ForwardOracle::ForwardOracle(std::shared_ptr<const ForwardModel> model, int count,
                             SolverOptions options)
    : model_(std::move(model)), count_(count), options_(options) {
  if (count_ < 0 || count_ > model_->mesh.size())
    throw ContractError("oracle eigenvalue count out of range");
}

Eigen::VectorXd ForwardOracle::eigenvalues(const Eigen::VectorXd& omega) {
  if (omega.size() != boundary_size())
    throw ContractError("oracle query has the wrong boundary length");
  if (auto it = cache_.find(omega); it != cache_.end()) return it->second;
  Eigen::VectorXd values = model_->solve(omega, count_, options_).values;
  ++solves_;
  cache_.emplace(omega, values);
  return values;
}

Eigen::VectorXd RecordingOracle::eigenvalues(const Eigen::VectorXd& omega) {
  Eigen::VectorXd values = inner_.eigenvalues(omega);
  if (seen_.find(omega) == seen_.end()) {
    seen_.emplace(omega, records_.size());
    records_.push_back({omega, values});
  }
  return values;
}

ReplayOracle::ReplayOracle(std::vector<OracleRecord> records, int count, int boundary_size)
    : count_(count), boundary_size_(boundary_size) {
  for (auto& rec : records) {
    if (rec.eigenvalues.size() != count_ || rec.omega.size() != boundary_size_)
      throw ConfigError("replay record has inconsistent dimensions");
    table_.emplace(std::move(rec.omega), std::move(rec.eigenvalues));
  }
}

Eigen::VectorXd ReplayOracle::eigenvalues(const Eigen::VectorXd& omega) {
  auto it = table_.find(omega);
  if (it == table_.end())
    throw MissingQueryError("replay oracle has no record for omega hash " + field_hash_hex(omega));
  return it->second;
}

namespace {

nlohmann::json to_array(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd from_array(const nlohmann::json& a) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
  return v;
}

}  // namespace

void write_oracle_file(const std::filesystem::path& path, const std::vector<OracleRecord>& records) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& rec : records)
    doc.push_back({{"omega", to_array(rec.omega)}, {"eigenvalues", to_array(rec.eigenvalues)}});
  std::ofstream out(path);
  if (!out) throw Error("cannot open oracle file for writing: " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw Error("failed writing oracle file: " + path.string());
}

std::vector<OracleRecord> read_oracle_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open oracle file: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("oracle file is not valid JSON: " + std::string(e.what()));
  }
  if (!doc.is_array()) throw ConfigError("oracle file must hold a JSON array");
  std::vector<OracleRecord> records;
  records.reserve(doc.size());
  for (const auto& item : doc) {
    if (!item.contains("omega") || !item.contains("eigenvalues"))
      throw ConfigError("oracle record needs 'omega' and 'eigenvalues'");
    records.push_back({from_array(item.at("omega")), from_array(item.at("eigenvalues"))});
  }
  return records;
}

ReplayOracle load_replay_oracle(const std::filesystem::path& path, int fallback_count,
                                int fallback_boundary_size) {
  auto records = read_oracle_file(path);
  int count = fallback_count;
  int nb = fallback_boundary_size;
  if (!records.empty()) {
    count = static_cast<int>(records.front().eigenvalues.size());
    nb = static_cast<int>(records.front().omega.size());
  }
  return ReplayOracle(std::move(records), count, nb);
}

}  // namespace robinspec
