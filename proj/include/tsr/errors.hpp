#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tsr {

// Base for all library errors so callers can catch tsr failures separately
// from std ones.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(what) {}
};

// Malformed input file. `row` is the 1-based physical line, 0 if unknown.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& what, std::size_t row = 0)
        : Error(row ? what + " (row " + std::to_string(row) + ")" : what), row_(row) {}
    std::size_t row() const { return row_; }

private:
    std::size_t row_;
};

class DegenerateRange : public Error {
public:
    explicit DegenerateRange(const std::string& what) : Error(what) {}
};

class QuotaInfeasible : public Error {
public:
    explicit QuotaInfeasible(const std::string& what) : Error(what) {}
};

// Incompatible tensor/layer shapes. `layer` is the offending layer index
// when the error comes from walking a network spec, npos otherwise.
class ShapeError : public Error {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    explicit ShapeError(const std::string& what, std::size_t layer = npos)
        : Error(layer == npos ? what : what + " (layer " + std::to_string(layer) + ")"),
          layer_(layer) {}
    std::size_t layer() const { return layer_; }

private:
    std::size_t layer_;
};

// Training diverged: a loss value became NaN or infinite.
class NonFiniteLoss : public Error {
public:
    explicit NonFiniteLoss(const std::string& what, std::size_t epoch)
        : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
    std::size_t epoch() const { return epoch_; }

private:
    std::size_t epoch_;
};

class TooFewPoints : public Error {
public:
    explicit TooFewPoints(const std::string& what) : Error(what) {}
};

class IndexError : public Error {
public:
    explicit IndexError(const std::string& what) : Error(what) {}
};

class LengthMismatch : public Error {
public:
    explicit LengthMismatch(const std::string& what) : Error(what) {}
};

class ModelFamilyMismatch : public Error {
public:
    explicit ModelFamilyMismatch(const std::string& what) : Error(what) {}
};

}  // namespace tsr
