#include "sgrl/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sgrl::ckpt {

namespace {
constexpr const char* kMagic = "sgrl-checkpoint";
constexpr int kVersion = 1;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

const ad::Tensor* Bundle::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save(const std::filesystem::path& path, const Bundle& bundle) {
  std::ostringstream os;
  os << kMagic << " " << kVersion << "\n";
  for (const auto& [k, v] : bundle.meta) {
    check_arg(k.find_first_of(" \n") == std::string::npos, "checkpoint: bad meta key '" + k + "'");
    check_arg(v.find('\n') == std::string::npos, "checkpoint: meta value contains newline");
    os << "meta " << k << " " << v << "\n";
  }
  for (const auto& [name, t] : bundle.tensors) {
    check_arg(!name.empty() && name.find_first_of(" \n") == std::string::npos,
              "checkpoint: bad tensor name '" + name + "'");
    os << "tensor " << name << " " << t.rows << " " << t.cols << "\n";
    for (int i = 0; i < t.size(); ++i) {
      if (i) os << " ";
      os << fmt_double(t.v[i]);
    }
    os << "\n";
  }
  os << "end\n";

  std::ofstream f(path, std::ios::binary);
  if (!f) fail_run("checkpoint: cannot open " + path.string() + " for writing");
  f << os.str();
  if (!f) fail_run("checkpoint: write failed for " + path.string());
}

Bundle load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_run("checkpoint: cannot open " + path.string());

  auto corrupt = [&](const std::string& why) {
    fail_run("checkpoint: " + path.string() + ": " + why);
  };

  std::string line;
  if (!std::getline(f, line)) corrupt("empty file");
  {
    std::istringstream is(line);
    std::string magic;
    int version = -1;
    is >> magic >> version;
    if (magic != kMagic) corrupt("bad magic '" + magic + "'");
    if (version != kVersion) corrupt("unsupported version " + std::to_string(version));
  }

  Bundle out;
  bool saw_end = false;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag == "meta") {
      std::string key;
      is >> key;
      if (key.empty()) corrupt("meta line without key");
      std::string value;
      std::getline(is, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      out.meta[key] = value;
    } else if (tag == "tensor") {
      std::string name;
      int rows = 0, cols = 0;
      is >> name >> rows >> cols;
      if (name.empty() || rows <= 0 || cols <= 0) corrupt("bad tensor header: " + line);
      std::string data;
      if (!std::getline(f, data)) corrupt("missing values for tensor " + name);
      std::istringstream ds(data);
      std::vector<double> vals(static_cast<std::size_t>(rows) * cols);
      for (auto& v : vals)
        if (!(ds >> v)) corrupt("short value row for tensor " + name);
      double extra;
      if (ds >> extra) corrupt("trailing values for tensor " + name);
      out.tensors.emplace_back(name, ad::Tensor(rows, cols, std::move(vals)));
    } else if (tag == "end") {
      saw_end = true;
      break;
    } else {
      corrupt("unknown line tag '" + tag + "'");
    }
  }
  if (!saw_end) corrupt("truncated file (no end marker)");
  return out;
}

}  // namespace sgrl::ckpt
