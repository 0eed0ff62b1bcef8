#pragma once

#include <stdexcept>

namespace noisemix {

/// Training data that cannot support the requested split (e.g. a class with no
/// training samples left).
class dataset_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent experiment configuration.
class config_error : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values produced during optimization or sampling.
class numerical_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace noisemix
