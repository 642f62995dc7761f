#include "translearn/rng.hpp"

// Header-only; this translation unit just validates standalone inclusion.
