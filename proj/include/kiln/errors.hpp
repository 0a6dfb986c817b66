#pragma once

#include <stdexcept>
#include <string>

namespace kiln {

// A caller broke a documented precondition (undefined stage edge, empty
// reduce input, next_batch after convergence, ...).
class ContractViolation : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// Operation attempted on a resource in the wrong lifecycle state.
class IllegalState : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

// Real filesystem failure, as opposed to an injected fault.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Bad user input outside the run-spec validator (sweep paths, search queries).
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace kiln
