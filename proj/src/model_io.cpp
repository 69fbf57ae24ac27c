#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "nytron/bytes.hpp"
#include "nytron/error.hpp"
#include "nytron/objective.hpp"

namespace nytron {

void save_model(const std::string& path, const ModelState& model) {
  if (model.beta.size() != model.basis.size())
    throw ContractError("save_model: beta length != basis size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  char header[256];
  std::snprintf(header, sizeof(header),
                "#nytron-model m=%zu d=%d sigma=%.17g lambda=%.17g loss=%s source=%s seed=%" PRIu64
                "\n",
                model.basis.size(), model.dim, model.params.sigma, model.params.lambda,
                to_string(model.loss), to_string(model.basis.source), model.basis.seed);
  out << header;
  for (const auto& p : model.basis.points) out << point_line(p) << '\n';
  Bytes raw;
  for (double b : model.beta) put_f64(raw, b);
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("short write to " + path);
}

ModelState load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) throw ParseError(path + ": empty model file");
  std::size_t m = 0;
  int d = 0;
  double sigma = 0, lambda = 0;
  char loss_buf[32] = {0}, source_buf[32] = {0};
  std::uint64_t seed = 0;
  if (std::sscanf(header.c_str(),
                  "#nytron-model m=%zu d=%d sigma=%lg lambda=%lg loss=%31s source=%31s seed=%" SCNu64,
                  &m, &d, &sigma, &lambda, loss_buf, source_buf, &seed) != 7)
    throw ParseError(path + ": bad model header");

  ModelState model;
  model.dim = d;
  model.params.sigma = sigma;
  model.params.lambda = lambda;
  model.loss = loss_from(loss_buf);
  model.basis.source = basis_source_from(source_buf);
  model.basis.sigma = sigma;
  model.basis.seed = seed;
  model.basis.points.reserve(m);
  std::string line;
  for (std::size_t k = 0; k < m; ++k) {
    if (!std::getline(in, line)) throw ParseError(path + ": truncated basis section");
    model.basis.points.push_back(parse_point_line(line, k + 2));
  }
  model.basis.recompute_norms();
  std::vector<char> raw(m * 8);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw ParseError(path + ": truncated coefficient section");
  model.beta.resize(m);
  ByteReader r(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size());
  for (double& b : model.beta) b = r.f64();
  return model;
}

}  // namespace nytron
