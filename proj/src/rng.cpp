#include "dctx/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "dctx/error.hpp"

namespace dctx {

int Rng::uniform_int(int lo, int hi) {
  const auto span = static_cast<std::uint64_t>(static_cast<std::int64_t>(hi) - lo + 1);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t r;
  do r = engine_(); while (r >= limit);
  return lo + static_cast<int>(r % span);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do u1 = uniform(); while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::trunc_normal(double sigma) {
  double z;
  do z = normal(); while (std::abs(z) > 2.0);
  return sigma * z;
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_ << ' ' << has_spare_ << ' ';
  os.precision(17);
  os << std::hexfloat << spare_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_ >> has_spare_;
  std::string spare;
  is >> spare;
  if (!is && !is.eof()) fail(ErrorKind::TruncatedFile, "unreadable RNG state");
  spare_ = std::strtod(spare.c_str(), nullptr);
}

}  // namespace dctx
