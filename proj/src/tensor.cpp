#include "translearn/tensor.hpp"

// Header-only; this translation unit just validates standalone inclusion.
