#pragma once

// Umbrella header for the initiative analytics library.

#include "initiative/dynamics.hpp"
#include "initiative/events.hpp"
#include "initiative/initiatives.hpp"
#include "initiative/mixture.hpp"
#include "initiative/persons.hpp"
#include "initiative/rng.hpp"
#include "initiative/synthetic.hpp"
#include "initiative/util.hpp"

namespace initiative {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace initiative
