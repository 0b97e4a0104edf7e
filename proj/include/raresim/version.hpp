#ifndef RARESIM_VERSION_HPP
#define RARESIM_VERSION_HPP

namespace raresim {

inline constexpr const char* kVersion = "0.1.0";

} // namespace raresim

#endif
