#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fairinv/graph.hpp"
#include "fairinv/tensor.hpp"

namespace testutil {

inline fairinv::DenseMat random_mat(fairinv::Rng& rng, std::size_t r, std::size_t c,
                                    double scale = 1.0) {
  fairinv::DenseMat m(r, c);
  for (double& x : m.data()) x = scale * rng.normal();
  return m;
}

// Erdős–Rényi graph with Gaussian features, both labels and a binary S.
inline fairinv::Graph random_graph(fairinv::Rng& rng, std::size_t n, std::size_t d, double p) {
  fairinv::EdgeList edges;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      if (rng.bernoulli(p)) edges.emplace_back(u, v);
    }
  }
  std::vector<int> y(n), s(n);
  for (std::size_t v = 0; v < n; ++v) {
    y[v] = static_cast<int>(v % 2);
    s[v] = rng.bernoulli(0.5) ? 1 : 0;
  }
  s[0] = 0;
  s[1] = 1;
  return fairinv::Graph(n, edges, random_mat(rng, n, d), y, {{"S", s}});
}

}  // namespace testutil
