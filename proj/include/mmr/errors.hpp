#pragma once

#include <stdexcept>
#include <string>

namespace mmr {

/// A value violated a structural precondition (bad lengths, bad ranges,
/// a Rollout that breaks its own invariants).
class structural_error : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// A non-finite quantity showed up where a finite one was required.
class numeric_error : public std::runtime_error {
  public:
    numeric_error(const std::string& what, std::size_t rollout_index)
        : std::runtime_error(what), rollout_index_(rollout_index)
    {}

    [[nodiscard]] std::size_t rollout_index() const noexcept { return rollout_index_; }

  private:
    std::size_t rollout_index_;
};

class config_error : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Input files that cannot be read or decoded.
class io_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace mmr
