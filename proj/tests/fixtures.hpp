#pragma once

#include "generators.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace cfb::testing {

//! Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name)
{
  auto dir = std::filesystem::temp_directory_path() / ("cfb_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

//! Birthweight-style observational file: smoker is the treatment, bweight
//! the outcome, age (18-40) the conditioning variable.
inline void write_birthweight_csv(const std::filesystem::path& path, int n, std::uint64_t seed)
{
  Gen gen(seed);
  std::ofstream out(path);
  out << "age,alcohol,first_baby,educ,prenatal1,n_visits,prev_death,smoker,bweight\n";
  for (int i = 0; i < n; ++i) {
    const double age = gen.uniform(18.0, 40.0);
    const int alcohol = gen.uniform() < 0.1;
    const int first = gen.uniform() < 0.4;
    const int educ = gen.integer(8, 17);
    const int prenatal = gen.uniform() < 0.8;
    const int visits = gen.integer(2, 20);
    const int prev_death = gen.uniform() < 0.05;
    const double p = 1.0 / (1.0 + std::exp(-(-1.0 + 0.04 * (age - 28.0) + 0.8 * alcohol - 0.1 * (educ - 12))));
    const int smoker = gen.uniform() < p;
    const double bw = 3400.0 + 8.0 * (age - 28.0) - 150.0 * smoker - 3.0 * smoker * (age - 28.0) * (age - 28.0) / 10.0 -
                      60.0 * first + 10.0 * visits - 200.0 * prev_death + 400.0 * gen.normal();
    out << age << ',' << alcohol << ',' << first << ',' << educ << ',' << prenatal << ',' << visits << ','
        << prev_death << ',' << smoker << ',' << bw << '\n';
  }
}

} // namespace cfb::testing
