#include <iostream>

#include "criteria.hpp"

int main() {
  kpf::acceptance::Options opts;
  opts.log = &std::cerr;
  const auto results = kpf::acceptance::run(opts, std::cout);
  return kpf::acceptance::exit_code(results, kpf::acceptance::known_failures());
}
