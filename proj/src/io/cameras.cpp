#include "dnmp/io/cameras.hpp"

#include <fstream>
#include <stdexcept>

namespace dnmp::io {

nlohmann::json camera_to_json(const Camera& cam) {
  nlohmann::json j;
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  j["width"] = cam.width;
  j["height"] = cam.height;
  std::vector<double> r(9), t(3);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r[3 * i + k] = cam.rotation(i, k);
    t[i] = cam.translation[i];
  }
  j["R"] = r;
  j["t"] = t;
  return j;
}

Camera camera_from_json(const nlohmann::json& j) {
  Camera cam;
  cam.fx = j.at("fx").get<double>();
  cam.fy = j.at("fy").get<double>();
  cam.cx = j.at("cx").get<double>();
  cam.cy = j.at("cy").get<double>();
  cam.width = j.at("width").get<int>();
  cam.height = j.at("height").get<int>();
  const auto r = j.at("R").get<std::vector<double>>();
  const auto t = j.at("t").get<std::vector<double>>();
  if (r.size() != 9 || t.size() != 3) throw std::invalid_argument("camera R must have 9 values and t 3");
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) cam.rotation(i, k) = r[3 * i + k];
    cam.translation[i] = t[i];
  }
  cam.validate();
  return cam;
}

std::vector<Camera> load_cameras(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  if (!j.is_array()) throw std::runtime_error(path.string() + ": expected a list of cameras");
  std::vector<Camera> cams;
  for (std::size_t i = 0; i < j.size(); ++i) {
    try {
      cams.push_back(camera_from_json(j[i]));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ": camera " + std::to_string(i) + ": " + e.what());
    }
  }
  return cams;
}

void save_cameras(const std::vector<Camera>& cameras, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& c : cameras) j.push_back(camera_to_json(c));
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

}  // namespace dnmp::io
