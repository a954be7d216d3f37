#include "shrinkhs/json_io.hpp"

#include "shrinkhs/csv.hpp"

#include <fstream>

namespace shrinkhs {

void to_json(nlohmann::json& j, const Hyperparams& h) {
  j = nlohmann::json{{"variant", to_string(h.variant)},
                     {"group_shape", io::to_json_array(h.group_shape)},
                     {"group_rate", io::to_json_array(h.group_rate)},
                     {"error_shape", h.error_shape},
                     {"error_rate", h.error_rate},
                     {"pooled_tau_sq", io::to_json_array(h.pooled_tau_sq)}};
}

void from_json(const nlohmann::json& j, Hyperparams& h) {
  h.variant = variant_from_string(j.at("variant").get<std::string>());
  h.group_shape = io::vector_from_json(j.at("group_shape"));
  h.group_rate = io::vector_from_json(j.at("group_rate"));
  h.error_shape = j.at("error_shape").get<double>();
  h.error_rate = j.at("error_rate").get<double>();
  h.pooled_tau_sq = io::vector_from_json(j.at("pooled_tau_sq"));
  const auto G = h.group_shape.size();
  if (G < 1 || h.group_rate.size() != G || h.pooled_tau_sq.size() != G)
    throw InvalidInput("hyperparameters: group vectors must be non-empty and equally long");
}

}  // namespace shrinkhs

namespace shrinkhs::io {

nlohmann::json to_json_array(const Vector& v) {
  auto out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidInput("expected a JSON array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << '\n';
  out.close();
  if (out.fail()) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace shrinkhs::io
