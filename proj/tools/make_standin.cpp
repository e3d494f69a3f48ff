// make_standin: writes the demo education-wage table used by configs/semisynthetic.json.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ceme/semisynth/semisynth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic stand-in for the education-wage table"};
  std::size_t rows = 3000, missing = 20;
  int covariates = 5;
  std::uint64_t seed = 7;
  std::string out;
  app.add_option("--rows", rows, "complete rows");
  app.add_option("--covariates", covariates, "covariate columns c1..cN")->check(CLI::PositiveNumber);
  app.add_option("--missing", missing, "extra rows with a missing used value");
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--out", out, "output CSV")->required();
  CLI11_PARSE(app, argc, argv);

  std::ofstream f(out, std::ios::binary);
  f << ceme::semisynth::standin_table_csv(rows, covariates, missing, seed);
  if (!f) {
    std::cerr << "make_standin: cannot write " << out << "\n";
    return 3;
  }
  return 0;
}
